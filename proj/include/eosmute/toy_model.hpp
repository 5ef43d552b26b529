#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/errors.hpp"
#include "eosmute/mel.hpp"
#include "eosmute/model.hpp"
#include "eosmute/waveform.hpp"

namespace eosmute::model::toy {

inline constexpr double kSlotSeconds = 0.16;
inline constexpr int kSlotSamples = 2560;          // 0.16 s at 16 kHz
inline constexpr int kSlotFrames = 16;             // at 10 ms hop
inline constexpr std::int64_t kChunkSamples = 480000;  // 30-second chunk
inline constexpr int kMaxSlots = 187;

inline std::vector<std::string> default_words(int vocab_size) {
  static const char* kNames[] = {"noise",   "alpha",  "bravo", "charlie", "delta",
                                 "echo",    "foxtrot", "golf",  "hotel",   "india",
                                 "juliet",  "kilo",   "lima",  "mike",    "november",
                                 "oscar",   "papa",   "quebec", "romeo",   "sierra"};
  std::vector<std::string> words(vocab_size);
  for (int i = 2; i < vocab_size; ++i) {
    const int j = i - 2;
    words[i] = (j < static_cast<int>(std::size(kNames))) ? kNames[j]
                                                         : "tok" + std::to_string(i);
  }
  return words;
}

inline Vocabulary make_toy_vocabulary(int vocab_size) {
  if (vocab_size < 4) throw ConfigError("toy vocabulary needs at least 4 tokens");
  Vocabulary v;
  v.size = vocab_size;
  v.bos_sequence = {0};
  v.eos_id = 1;
  v.words = default_words(vocab_size);
  return v;
}

// A deliberately small autoregressive scorer: audio is cut into fixed
// 0.16-second slots; decoding step t reads the mean log-Mel feature of slot t
// and the previous token. Logits are (W + W0) f + b + U[:, prev] where W0 is
// a frozen random matrix drawn from the seed — each seed gets its own
// non-robust logit directions, so adversarial snippets are model-specific.
class ToyModel : public VictimModel {
public:
  ToyModel(std::uint64_t seed, int vocab_size, audio::MelConfig mel_cfg = {},
           double frozen_scale = 0.25)
      : seed_(seed),
        vocab_(make_toy_vocabulary(vocab_size)),
        mel_cfg_(mel_cfg),
        frozen_scale_(frozen_scale),
        analyzer_(mel_cfg, audio::kDefaultSampleRate) {
    const int v = vocab_.size;
    const int m = mel_cfg_.n_mels;
    w_train_.assign(static_cast<std::size_t>(v) * m, 0.0);
    bias_.assign(v, 0.0);
    prev_table_.assign(static_cast<std::size_t>(v) * v, 0.0);
    w_frozen_.resize(static_cast<std::size_t>(v) * m);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, frozen_scale_);
    for (double& w : w_frozen_) w = dist(rng);
  }

  std::string identity() const override { return "toy:" + std::to_string(seed_); }
  const Vocabulary& vocabulary() const override { return vocab_; }
  bool differentiable() const override { return true; }
  std::uint64_t seed() const { return seed_; }
  const audio::MelConfig& mel_config() const { return mel_cfg_; }
  const audio::MelAnalyzer& analyzer() const { return analyzer_; }

  std::vector<double> next_token_logprobs(const audio::Waveform& x,
                                          std::span<const TokenId> prefix) const override {
    check_prefix(vocab_, prefix);
    const int slot = static_cast<int>(prefix.size() - vocab_.bos_sequence.size());
    const auto f = slot_feature(x.samples, slot);
    return log_softmax(logits(f, prefix.back()));
  }

  std::vector<double> input_gradient(const audio::Waveform& x,
                                     const LogProbLoss& loss) const override {
    std::vector<double> grad(x.samples.size(), 0.0);
    const auto chunk = chunk_span(x.samples);
    const int m = mel_cfg_.n_mels;
    for (const LogProbTerm& term : loss) {
      check_prefix(vocab_, term.prefix);
      if (term.token < 0 || term.token >= vocab_.size) {
        throw ContractError("input_gradient: token id out of range");
      }
      const int slot = static_cast<int>(term.prefix.size() - vocab_.bos_sequence.size());
      if (slot >= kMaxSlots) continue;  // past the 30-second chunk: constant
      const auto f = slot_feature(x.samples, slot);
      const auto lg = logits(f, term.prefix.back());
      const auto p = softmax(lg);
      // d(coeff * logprob[token]) / d(logits) = coeff * (onehot - p)
      std::vector<double> df(m, 0.0);
      for (int v = 0; v < vocab_.size; ++v) {
        const double dl = term.coeff * ((v == term.token ? 1.0 : 0.0) - p[v]);
        const double* wrow_t = w_train_.data() + static_cast<std::size_t>(v) * m;
        const double* wrow_f = w_frozen_.data() + static_cast<std::size_t>(v) * m;
        for (int j = 0; j < m; ++j) df[j] += dl * (wrow_t[j] + wrow_f[j]);
      }
      // The slot feature is the mean over kSlotFrames frames.
      std::vector<double> grad_rows(static_cast<std::size_t>(kSlotFrames) * m);
      for (int fr = 0; fr < kSlotFrames; ++fr) {
        for (int j = 0; j < m; ++j) grad_rows[fr * m + j] = df[j] / kSlotFrames;
      }
      analyzer_.backprop_frames(chunk, slot * kSlotFrames, (slot + 1) * kSlotFrames,
                                grad_rows, std::span<double>(grad.data(), chunk.size()));
    }
    return grad;
  }

  // Mean log-Mel feature of one decode slot; slots past the 30-second chunk
  // read as silence.
  std::vector<double> slot_feature(std::span<const double> samples, int slot) const {
    const int m = mel_cfg_.n_mels;
    if (slot >= kMaxSlots) {
      return std::vector<double>(m, analyzer_.floor_value());
    }
    const auto spec =
        analyzer_.compute_frames(chunk_span(samples), slot * kSlotFrames,
                                 (slot + 1) * kSlotFrames);
    std::vector<double> f(m, 0.0);
    for (int fr = 0; fr < kSlotFrames; ++fr) {
      for (int j = 0; j < m; ++j) f[j] += spec.at(fr, j);
    }
    for (double& v : f) v /= kSlotFrames;
    return f;
  }

  std::vector<double> logits(std::span<const double> feature, TokenId prev) const {
    const int m = mel_cfg_.n_mels;
    std::vector<double> lg(vocab_.size);
    for (int v = 0; v < vocab_.size; ++v) {
      const double* wrow_t = w_train_.data() + static_cast<std::size_t>(v) * m;
      const double* wrow_f = w_frozen_.data() + static_cast<std::size_t>(v) * m;
      double acc = bias_[v] + prev_table_[static_cast<std::size_t>(v) * vocab_.size + prev];
      for (int j = 0; j < m; ++j) acc += (wrow_t[j] + wrow_f[j]) * feature[j];
      lg[v] = acc;
    }
    return lg;
  }

  // Trainable parameter access (pretraining and checkpoint I/O).
  std::vector<double>& w_train() { return w_train_; }
  std::vector<double>& bias() { return bias_; }
  std::vector<double>& prev_table() { return prev_table_; }
  const std::vector<double>& w_train() const { return w_train_; }
  const std::vector<double>& bias() const { return bias_; }
  const std::vector<double>& prev_table() const { return prev_table_; }
  const std::vector<double>& w_frozen() const { return w_frozen_; }

  static std::vector<double> softmax(std::span<const double> lg) {
    std::vector<double> p(lg.begin(), lg.end());
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
  }

  static std::vector<double> log_softmax(std::span<const double> lg) {
    const double mx = *std::max_element(lg.begin(), lg.end());
    double sum = 0.0;
    for (double v : lg) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(lg.begin(), lg.end());
    for (double& v : out) v -= lse;
    return out;
  }

private:
  static std::span<const double> chunk_span(std::span<const double> samples) {
    const std::size_t n =
        std::min<std::size_t>(samples.size(), static_cast<std::size_t>(kChunkSamples));
    return samples.subspan(0, n);
  }

  std::uint64_t seed_;
  Vocabulary vocab_;
  audio::MelConfig mel_cfg_;
  double frozen_scale_;
  audio::MelAnalyzer analyzer_;
  std::vector<double> w_train_;   // vocab x n_mels, learned
  std::vector<double> w_frozen_;  // vocab x n_mels, fixed at construction
  std::vector<double> bias_;      // vocab
  std::vector<double> prev_table_;  // vocab x vocab, column indexed by prev token
};

inline std::shared_ptr<ToyModel> make_toy_model(std::uint64_t seed, int vocab_size = 16) {
  return std::make_shared<ToyModel>(seed, vocab_size);
}

struct LabeledUtterance {
  audio::Waveform audio;
  std::vector<TokenId> tokens;  // content tokens only, no bos/eos
};

struct PretrainConfig {
  double learning_rate = 0.1;
  int epochs = 60;
  std::uint64_t seed = 1;
};

// Supervised teacher-forced fit of the trainable parameters on slot-aligned
// utterances. The objective is convex in (W, b, U), so this converges.
inline void pretrain(ToyModel& model, const std::vector<LabeledUtterance>& data,
                     const PretrainConfig& cfg = {}) {
  if (data.empty()) throw ConfigError("pretrain: empty dataset");
  const Vocabulary& vocab = model.vocabulary();
  const int m = model.mel_config().n_mels;
  const int v = vocab.size;

  struct Sample {
    std::vector<double> feature;
    TokenId prev;
    TokenId target;
  };
  std::vector<Sample> samples;
  for (const LabeledUtterance& utt : data) {
    std::vector<TokenId> seq = utt.tokens;
    seq.push_back(vocab.eos_id);
    TokenId prev = vocab.bos_sequence.back();
    for (std::size_t t = 0; t < seq.size(); ++t) {
      samples.push_back(
          {model.slot_feature(utt.audio.samples, static_cast<int>(t)), prev, seq[t]});
      prev = seq[t];
    }
  }

  const std::size_t nw = model.w_train().size();
  const std::size_t nb = model.bias().size();
  const std::size_t nu = model.prev_table().size();
  const std::size_t np = nw + nb + nu;
  std::vector<double> m1(np, 0.0), m2(np, 0.0);
  double beta1t = 1.0, beta2t = 1.0;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const Sample& s = samples[idx];
      const auto lg = model.logits(s.feature, s.prev);
      const auto p = ToyModel::softmax(lg);
      beta1t *= kBeta1;
      beta2t *= kBeta2;
      auto adam_step = [&](std::size_t flat, double g, double& param) {
        m1[flat] = kBeta1 * m1[flat] + (1.0 - kBeta1) * g;
        m2[flat] = kBeta2 * m2[flat] + (1.0 - kBeta2) * g * g;
        const double mhat = m1[flat] / (1.0 - beta1t);
        const double vhat = m2[flat] / (1.0 - beta2t);
        param -= cfg.learning_rate * mhat / (std::sqrt(vhat) + kEps);
      };
      for (int c = 0; c < v; ++c) {
        const double dl = p[c] - (c == s.target ? 1.0 : 0.0);
        for (int j = 0; j < m; ++j) {
          const std::size_t wi = static_cast<std::size_t>(c) * m + j;
          adam_step(wi, dl * s.feature[j], model.w_train()[wi]);
        }
        adam_step(nw + c, dl, model.bias()[c]);
        const std::size_t ui = static_cast<std::size_t>(c) * v + s.prev;
        adam_step(nw + nb + ui, dl, model.prev_table()[ui]);
      }
    }
  }
}

// Checkpoint: 4-byte little-endian JSON header length, JSON header, then the
// trainable and frozen parameters as raw doubles.
inline void save_checkpoint(const ToyModel& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["identity"] = model.identity();
  header["seed"] = model.seed();
  const Vocabulary& vocab = model.vocabulary();
  header["vocab"] = {{"size", vocab.size},
                     {"eos_id", vocab.eos_id},
                     {"bos_sequence", vocab.bos_sequence},
                     {"words", vocab.words}};
  const auto& mc = model.mel_config();
  header["frontend"] = {{"n_mels", mc.n_mels},
                        {"window", mc.window},
                        {"hop", mc.hop},
                        {"fft_size", mc.fft_size},
                        {"log_floor", mc.log_floor}};
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DecodeError("cannot write checkpoint: " + path.string());
  const auto len = static_cast<std::uint32_t>(hs.size());
  char lenbuf[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                    static_cast<char>((len >> 16) & 0xff),
                    static_cast<char>((len >> 24) & 0xff)};
  out.write(lenbuf, 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  auto dump = [&](const std::vector<double>& vec) {
    out.write(reinterpret_cast<const char*>(vec.data()),
              static_cast<std::streamsize>(vec.size() * sizeof(double)));
  };
  dump(model.w_train());
  dump(model.bias());
  dump(model.prev_table());
  dump(model.w_frozen());
}

inline std::shared_ptr<ToyModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open checkpoint: " + path.string());
  unsigned char lenbuf[4];
  in.read(reinterpret_cast<char*>(lenbuf), 4);
  const std::uint32_t len = lenbuf[0] | (lenbuf[1] << 8) | (lenbuf[2] << 16) |
                            (static_cast<std::uint32_t>(lenbuf[3]) << 24);
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw DecodeError("truncated checkpoint header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(hs);
  audio::MelConfig mc;
  mc.n_mels = header["frontend"]["n_mels"].get<int>();
  mc.window = header["frontend"]["window"].get<int>();
  mc.hop = header["frontend"]["hop"].get<int>();
  mc.fft_size = header["frontend"]["fft_size"].get<int>();
  mc.log_floor = header["frontend"]["log_floor"].get<double>();
  auto model = std::make_shared<ToyModel>(header["seed"].get<std::uint64_t>(),
                                          header["vocab"]["size"].get<int>(), mc);
  auto slurp = [&](std::vector<double>& vec) {
    in.read(reinterpret_cast<char*>(vec.data()),
            static_cast<std::streamsize>(vec.size() * sizeof(double)));
  };
  slurp(model->w_train());
  slurp(model->bias());
  slurp(model->prev_table());
  std::vector<double> frozen(model->w_frozen().size());
  slurp(frozen);
  if (!in) throw DecodeError("truncated checkpoint parameters: " + path.string());
  if (frozen != model->w_frozen()) {
    throw DecodeError("checkpoint frozen weights do not match seed: " + path.string());
  }
  return model;
}

}  // namespace eosmute::model::toy
