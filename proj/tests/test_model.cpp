#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include "eosmute/model.hpp"
#include "eosmute/toy_data.hpp"
#include "eosmute/toy_model.hpp"

using namespace eosmute;
using namespace eosmute::model;
using namespace eosmute::model::toy;

namespace {

// Stub whose logits are fixed; used for decoder contract tests.
class FixedLogitModel : public VictimModel {
public:
  FixedLogitModel(Vocabulary vocab, std::vector<double> logits)
      : vocab_(std::move(vocab)), logits_(std::move(logits)) {}

  std::string identity() const override { return "stub:fixed"; }
  const Vocabulary& vocabulary() const override { return vocab_; }

  std::vector<double> next_token_logprobs(const audio::Waveform&,
                                          std::span<const TokenId> prefix) const override {
    check_prefix(vocab_, prefix);
    return ToyModel::log_softmax(logits_);
  }

private:
  Vocabulary vocab_;
  std::vector<double> logits_;
};

audio::Waveform make_tone(double hz, double seconds, double amp = 0.3) {
  audio::Waveform w;
  const auto n = static_cast<std::size_t>(std::llround(seconds * w.sample_rate));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / w.sample_rate);
  }
  return w;
}

audio::Waveform silence(double seconds) {
  audio::Waveform w;
  w.samples.assign(static_cast<std::size_t>(std::llround(seconds * w.sample_rate)), 0.0);
  return w;
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "eosmute_model_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("toy vocabulary structure") {
  const Vocabulary v = make_toy_vocabulary(16);
  CHECK(v.size == 16);
  CHECK(v.bos_sequence == std::vector<TokenId>{0});
  CHECK(v.eos_id == 1);
  CHECK(v.is_special(0));
  CHECK(v.is_special(1));
  CHECK_FALSE(v.is_special(2));
  CHECK(v.words[2] == "noise");
  CHECK(v.words[3] == "alpha");
  CHECK_THROWS_AS(make_toy_vocabulary(3), ConfigError);
}

TEST_CASE("vocabulary tokenize/render round-trip") {
  const Vocabulary v = make_toy_vocabulary(16);
  const std::vector<TokenId> toks = v.tokenize("alpha bravo noise charlie");
  CHECK(toks == std::vector<TokenId>{3, 4, 2, 5});
  CHECK(v.render(toks) == "alpha bravo noise charlie");
  CHECK_THROWS_AS(v.tokenize("alpha zebra"), ContractError);
}

TEST_CASE("next_token_logprobs normalizes and is deterministic") {
  auto m = make_toy_model(42);
  const audio::Waveform x = silence(1.0);
  const std::vector<TokenId> prefix = {0};
  const auto lp1 = m->next_token_logprobs(x, prefix);
  const auto lp2 = m->next_token_logprobs(x, prefix);
  CHECK(lp1 == lp2);
  double sum = 0.0;
  for (double v : lp1) sum += std::exp(v);
  CHECK(sum == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("normalization holds across prefixes and audio") {
  auto m = make_toy_model(7);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    audio::Waveform x;
    x.samples.resize(16000);
    for (double& s : x.samples) s = u(rng);
    std::vector<TokenId> prefix = {0};
    for (int step = 0; step < 3; ++step) {
      const auto lp = m->next_token_logprobs(x, prefix);
      double sum = 0.0;
      for (double v : lp) sum += std::exp(v);
      CHECK(sum == Catch::Approx(1.0).margin(1e-5));
      prefix.push_back(static_cast<TokenId>(trial % m->vocabulary().size));
    }
  }
}

TEST_CASE("prefix must start with the bos sequence") {
  auto m = make_toy_model(42);
  const audio::Waveform x = silence(0.5);
  CHECK_THROWS_AS(m->next_token_logprobs(x, std::vector<TokenId>{5}), ContractError);
  CHECK_THROWS_AS(m->next_token_logprobs(x, std::vector<TokenId>{}), ContractError);
}

TEST_CASE("same seed gives bitwise-identical parameters, different seeds differ") {
  auto a = make_toy_model(42);
  auto b = make_toy_model(42);
  auto c = make_toy_model(43);
  CHECK(a->w_frozen() == b->w_frozen());
  CHECK(a->w_frozen() != c->w_frozen());
  const audio::Waveform x = make_tone(440.0, 1.0);
  const std::vector<TokenId> prefix = {0};
  CHECK(a->next_token_logprobs(x, prefix) == b->next_token_logprobs(x, prefix));
  CHECK(a->next_token_logprobs(x, prefix) != c->next_token_logprobs(x, prefix));
}

TEST_CASE("transcribe stops immediately when eos dominates") {
  Vocabulary v = make_toy_vocabulary(8);
  std::vector<double> logits(8, 0.0);
  logits[v.eos_id] = 10.0;
  FixedLogitModel m(v, logits);
  const TranscriptionResult r = transcribe(m, silence(0.5));
  CHECK(r.token_ids.empty());
  CHECK(r.ended_with_eos);
  CHECK_FALSE(r.hit_cap);
  CHECK(r.empty_transcription());
  CHECK(r.text.empty());
}

TEST_CASE("transcribe respects the token cap") {
  Vocabulary v = make_toy_vocabulary(8);
  std::vector<double> logits(8, 0.0);
  logits[5] = 10.0;  // always emits token 5, never eos
  FixedLogitModel m(v, logits);
  const TranscriptionResult r = transcribe(m, silence(0.5), 7);
  CHECK(r.token_ids.size() == 7);
  CHECK(r.hit_cap);
  CHECK_FALSE(r.ended_with_eos);
  CHECK_FALSE(r.empty_transcription());
  CHECK_THROWS_AS(transcribe(m, silence(0.5), 0), ContractError);
}

TEST_CASE("greedy determinism and prefix consistency") {
  auto m = make_toy_model(11);
  std::mt19937_64 rng(3);
  data::ToyCorpusConfig cfg;
  const Vocabulary vocab = m->vocabulary();
  const data::ToyUtterance utt = data::make_toy_utterance(vocab, cfg, rng);

  const TranscriptionResult r1 = transcribe(*m, utt.audio);
  const TranscriptionResult r2 = transcribe(*m, utt.audio);
  CHECK(r1.token_ids == r2.token_ids);
  CHECK(r1.text == r2.text);

  // Re-derive the greedy path step by step from next_token_logprobs.
  std::vector<TokenId> prefix = vocab.bos_sequence;
  std::vector<TokenId> decoded;
  for (int step = 0; step < kDefaultMaxTokens; ++step) {
    const auto lp = m->next_token_logprobs(utt.audio, prefix);
    const auto next = static_cast<TokenId>(
        std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (next == vocab.eos_id) break;
    decoded.push_back(next);
    prefix.push_back(next);
  }
  CHECK(decoded == r1.token_ids);
}

TEST_CASE("input_gradient of a constant loss is zero and scales linearly") {
  auto m = make_toy_model(42);
  const audio::Waveform x = make_tone(500.0, 0.48);

  CHECK(m->differentiable());
  const std::vector<double> zero_grad = m->input_gradient(x, LogProbLoss{});
  for (double g : zero_grad) CHECK(g == 0.0);

  LogProbLoss loss;
  loss.push_back({{0}, m->vocabulary().eos_id, -1.0});
  LogProbLoss scaled = loss;
  scaled[0].coeff *= 2.5;
  const auto g1 = m->input_gradient(x, loss);
  const auto g2 = m->input_gradient(x, scaled);
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    const double scale = std::max(1e-12, std::abs(2.5 * g1[i]));
    CHECK(std::abs(g2[i] - 2.5 * g1[i]) / scale < 1e-6);
  }
}

TEST_CASE("input_gradient matches central finite differences") {
  auto m = make_toy_model(42);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int input = 0; input < 2; ++input) {
    audio::Waveform x;
    x.samples.resize(4800);
    for (double& s : x.samples) s = u(rng);

    LogProbLoss loss;
    loss.push_back({{0}, m->vocabulary().eos_id, -1.0});
    loss.push_back({{0, 5}, 6, -0.5});
    const auto grad = m->input_gradient(x, loss);

    std::uniform_int_distribution<std::size_t> pick(0, x.samples.size() - 1);
    const double h = 1e-4;
    for (int coord = 0; coord < 6; ++coord) {
      const std::size_t i = pick(rng);
      audio::Waveform xp = x, xm = x;
      xp.samples[i] += h;
      xm.samples[i] -= h;
      const double fd =
          (eval_logprob_loss(*m, xp, loss) - eval_logprob_loss(*m, xm, loss)) / (2.0 * h);
      const double scale = std::max({1e-8, std::abs(fd), std::abs(grad[i])});
      CHECK(std::abs(fd - grad[i]) / scale < 1e-3);
    }
  }
}

TEST_CASE("non-differentiable models raise a capability error for gradients") {
  Vocabulary v = make_toy_vocabulary(8);
  FixedLogitModel m(v, std::vector<double>(8, 0.0));
  CHECK_FALSE(m.differentiable());
  LogProbLoss loss;
  loss.push_back({{0}, 1, -1.0});
  CHECK_THROWS_AS(m.input_gradient(silence(0.5), loss), CapabilityError);
}

TEST_CASE("slots past the 30-second chunk read as silence") {
  auto m = make_toy_model(42);
  const auto f = m->slot_feature(std::vector<double>(100, 0.5), kMaxSlots + 2);
  for (double v : f) CHECK(v == m->analyzer().floor_value());
}

TEST_CASE("checkpoint round-trip preserves parameters and behavior") {
  auto m = make_toy_model(42);
  std::mt19937_64 rng(4);
  // Nudge trainable parameters so the checkpoint is not all zeros.
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (double& w : m->w_train()) w = u(rng);
  for (double& b : m->bias()) b = u(rng);
  for (double& p : m->prev_table()) p = u(rng);

  const auto path = temp_dir() / "toy42.ckpt";
  save_checkpoint(*m, path);
  auto back = load_checkpoint(path);
  CHECK(back->identity() == m->identity());
  CHECK(back->w_train() == m->w_train());
  CHECK(back->bias() == m->bias());
  CHECK(back->prev_table() == m->prev_table());
  CHECK(back->w_frozen() == m->w_frozen());

  const audio::Waveform x = make_tone(700.0, 0.8);
  CHECK(back->next_token_logprobs(x, std::vector<TokenId>{0}) ==
        m->next_token_logprobs(x, std::vector<TokenId>{0}));
  CHECK_THROWS_AS(load_checkpoint(temp_dir() / "missing.ckpt"), DecodeError);
}

TEST_CASE("pretraining teaches the slot-to-token mapping") {
  data::ToyCorpusConfig cfg;
  auto m = make_toy_model(42, cfg.vocab_size);
  const Vocabulary& vocab = m->vocabulary();
  std::mt19937_64 rng(cfg.seed);

  std::vector<LabeledUtterance> train;
  std::vector<data::ToyUtterance> held_out;
  for (int i = 0; i < 60; ++i) {
    const data::ToyUtterance utt = data::make_toy_utterance(vocab, cfg, rng);
    train.push_back({utt.audio, vocab.tokenize(utt.text)});
  }
  for (int i = 0; i < 15; ++i) held_out.push_back(data::make_toy_utterance(vocab, cfg, rng));

  PretrainConfig pcfg;
  pcfg.epochs = 25;
  pretrain(*m, train, pcfg);

  int exact = 0;
  for (const auto& utt : held_out) {
    const TranscriptionResult r = transcribe(*m, utt.audio);
    if (r.text == utt.text) ++exact;
  }
  // Small-sample smoke check; the full-corpus accuracy bound lives in the
  // acceptance suite.
  CHECK(exact >= 10);
  CHECK_THROWS_AS(pretrain(*m, {}, pcfg), ConfigError);
}

TEST_CASE("model registry resolves schemes and rejects unknown ones") {
  ModelRegistry registry;
  registry.register_scheme("toy", [](const std::string& spec) {
    return std::static_pointer_cast<VictimModel>(
        make_toy_model(spec.empty() ? 0 : std::stoull(spec)));
  });
  auto m = registry.create("toy:42");
  CHECK(m->identity() == "toy:42");
  CHECK_THROWS_AS(registry.create("whisper:small"), ConfigError);
}
