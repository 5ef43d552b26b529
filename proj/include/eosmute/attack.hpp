#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/errors.hpp"
#include "eosmute/model.hpp"
#include "eosmute/wav_io.hpp"
#include "eosmute/waveform.hpp"

namespace eosmute::attack {

struct SnippetParams {
  double epsilon = 0.02;
  double length_seconds = 0.64;
  double position_seconds = 0.0;

  void validate() const {
    if (epsilon <= 0.0) throw DomainError("SnippetParams: epsilon must be positive");
    if (length_seconds <= 0.0) throw DomainError("SnippetParams: length must be positive");
    if (position_seconds < 0.0 || position_seconds > 1.0) {
      throw DomainError("SnippetParams: position must be in [0, 1] seconds");
    }
  }
};

enum class Objective { kComplete, kPartial };

inline const char* objective_name(Objective o) {
  return o == Objective::kComplete ? "complete" : "partial";
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int patience = 5;
  double min_delta = 1e-4;
  int max_iterations = 30;
  double time_limit_seconds = 2700.0;
  int batch_size = 1;
  int delta_horizon = 10;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  enum class Init { kUniform, kZeros } init = Init::kUniform;
  // Partial objective: teacher-force from the reference transcript instead of
  // the unattacked model transcription.
  bool prefix_from_ground_truth = false;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"patience", c.patience},
       {"min_delta", c.min_delta},
       {"max_iterations", c.max_iterations},
       {"time_limit_seconds", c.time_limit_seconds},
       {"batch_size", c.batch_size},
       {"delta_horizon", c.delta_horizon},
       {"weight_decay", c.weight_decay},
       {"seed", c.seed},
       {"init", c.init == TrainConfig::Init::kUniform ? "uniform" : "zeros"},
       {"prefix_from_ground_truth", c.prefix_from_ground_truth}};
}

struct IterationRecord {
  double train_loss = 0.0;  // summed over the training pass
  double val_loss = 0.0;    // mean over the validation set
};

struct AttackSnippet {
  std::vector<double> samples;
  int sample_rate = audio::kDefaultSampleRate;
  SnippetParams params;
  Objective objective = Objective::kComplete;
  int delta_horizon = 10;
  std::string trained_on;
  std::uint64_t seed = 0;
  TrainConfig config;
  std::vector<IterationRecord> history;

  double linf_norm() const {
    double mx = 0.0;
    for (double s : samples) mx = std::max(mx, std::abs(s));
    return mx;
  }
};

inline AttackSnippet init_snippet(const SnippetParams& params, std::uint64_t seed,
                                  TrainConfig::Init scheme = TrainConfig::Init::kUniform) {
  params.validate();
  AttackSnippet a;
  a.params = params;
  a.seed = seed;
  const auto len = audio::seconds_to_samples(params.length_seconds, a.sample_rate);
  a.samples.assign(static_cast<std::size_t>(len), 0.0);
  if (scheme == TrainConfig::Init::kUniform) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-params.epsilon, params.epsilon);
    for (double& s : a.samples) s = dist(rng);
  }
  return a;
}

inline AttackSnippet project_linf(AttackSnippet a) {
  const double eps = a.params.epsilon;
  for (double& s : a.samples) s = std::clamp(s, -eps, eps);
  return a;
}

inline audio::Waveform apply_snippet(const audio::Waveform& x, const AttackSnippet& a) {
  return audio::splice_snippet(x, a.samples, a.sample_rate, a.params.position_seconds);
}

// -log P(y1 = eos | a (+) x, bos) as a loss-term list for the model contract.
inline model::LogProbLoss complete_loss_terms(const model::Vocabulary& vocab) {
  model::LogProbTerm term;
  term.prefix = vocab.bos_sequence;
  term.token = vocab.eos_id;
  term.coeff = -1.0;
  return {term};
}

// -(1/T) sum_{t=1..T} log P(y_t = eos | a (+) x, bos ++ source[0:t-1]),
// T = min(delta, |source|); an empty source degenerates to T = 1.
inline model::LogProbLoss partial_loss_terms(const model::Vocabulary& vocab,
                                             std::span<const model::TokenId> prefix_source,
                                             int delta) {
  if (delta < 1) throw DomainError("partial_suppression_loss: delta must be >= 1");
  const int horizon =
      std::max(1, static_cast<int>(std::min<std::size_t>(delta, prefix_source.size())));
  model::LogProbLoss terms;
  std::vector<model::TokenId> prefix = vocab.bos_sequence;
  for (int t = 0; t < horizon; ++t) {
    model::LogProbTerm term;
    term.prefix = prefix;
    term.token = vocab.eos_id;
    term.coeff = -1.0 / horizon;
    terms.push_back(std::move(term));
    if (t < static_cast<int>(prefix_source.size())) prefix.push_back(prefix_source[t]);
  }
  return terms;
}

inline double complete_suppression_loss(const model::VictimModel& m, const AttackSnippet& a,
                                        const audio::Waveform& x) {
  return model::eval_logprob_loss(m, apply_snippet(x, a),
                                  complete_loss_terms(m.vocabulary()));
}

inline double partial_suppression_loss(const model::VictimModel& m, const AttackSnippet& a,
                                       const audio::Waveform& x,
                                       std::span<const model::TokenId> prefix_source,
                                       int delta) {
  return model::eval_logprob_loss(
      m, apply_snippet(x, a), partial_loss_terms(m.vocabulary(), prefix_source, delta));
}

struct TrainExample {
  audio::Waveform audio;
  std::vector<model::TokenId> reference;  // tokenized ground truth, may be empty
};
using Dataset = std::vector<TrainExample>;

// Per-example adaptive-moment steps with decoupled weight decay on the
// snippet, followed by an l-infinity projection after every step. One
// iteration is a full pass over the training set; early stopping watches the
// mean validation loss with the configured patience and min_delta.
inline AttackSnippet train_attack(const model::VictimModel& m, const Dataset& train_set,
                                  const Dataset& val_set, const SnippetParams& params,
                                  const TrainConfig& cfg, Objective objective) {
  if (!m.differentiable()) {
    throw CapabilityError("train_attack: model '" + m.identity() + "' has no gradients");
  }
  if (train_set.empty() || val_set.empty()) {
    throw ConfigError("train_attack: empty training or validation set");
  }

  AttackSnippet snippet = init_snippet(params, cfg.seed, cfg.init);
  snippet.objective = objective;
  snippet.delta_horizon = cfg.delta_horizon;
  snippet.trained_on = m.identity();
  snippet.config = cfg;
  if (cfg.max_iterations <= 0) return snippet;

  const model::Vocabulary& vocab = m.vocabulary();

  // Teacher-forcing prefixes for the partial objective, cached up front from
  // the unattacked transcriptions (or the references when configured).
  auto prefix_sources = [&](const Dataset& ds) {
    std::vector<std::vector<model::TokenId>> out;
    if (objective != Objective::kPartial) return out;
    out.reserve(ds.size());
    for (const TrainExample& ex : ds) {
      if (cfg.prefix_from_ground_truth) {
        out.push_back(ex.reference);
      } else {
        out.push_back(model::transcribe(m, ex.audio).token_ids);
      }
    }
    return out;
  };
  const auto train_prefixes = prefix_sources(train_set);
  const auto val_prefixes = prefix_sources(val_set);

  auto terms_for = [&](std::size_t i, const std::vector<std::vector<model::TokenId>>& pfx) {
    if (objective == Objective::kComplete) return complete_loss_terms(vocab);
    return partial_loss_terms(vocab, pfx[i], cfg.delta_horizon);
  };

  const auto pos_offset = static_cast<std::size_t>(
      audio::seconds_to_samples(params.position_seconds, snippet.sample_rate));
  const std::size_t len = snippet.samples.size();

  std::vector<double> m1(len, 0.0), m2(len, 0.0);
  double beta1t = 1.0, beta2t = 1.0;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  auto mean_val_loss = [&]() {
    double sum = 0.0;
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      sum += model::eval_logprob_loss(m, apply_snippet(val_set[i].audio, snippet),
                                      terms_for(i, val_prefixes));
    }
    return sum / val_set.size();
  };

  const auto start_time = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time)
        .count();
  };

  double best_val = std::numeric_limits<double>::infinity();
  double patience_ref = std::numeric_limits<double>::infinity();
  int patience_left = cfg.patience;
  std::vector<double> best_samples = snippet.samples;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    double train_loss = 0.0;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      const auto terms = terms_for(i, train_prefixes);
      const audio::Waveform spliced = apply_snippet(train_set[i].audio, snippet);
      const std::size_t p = std::min(pos_offset, train_set[i].audio.samples.size());
      train_loss += model::eval_logprob_loss(m, spliced, terms);
      const auto grad = m.input_gradient(spliced, terms);
      beta1t *= kBeta1;
      beta2t *= kBeta2;
      for (std::size_t j = 0; j < len; ++j) {
        const double g = grad[p + j];
        m1[j] = kBeta1 * m1[j] + (1.0 - kBeta1) * g;
        m2[j] = kBeta2 * m2[j] + (1.0 - kBeta2) * g * g;
        const double mhat = m1[j] / (1.0 - beta1t);
        const double vhat = m2[j] / (1.0 - beta2t);
        double& s = snippet.samples[j];
        s -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + kEps) + cfg.weight_decay * s);
        s = std::clamp(s, -params.epsilon, params.epsilon);
      }
    }
    const double val = mean_val_loss();
    snippet.history.push_back({train_loss, val});
    if (val < best_val) {
      best_val = val;
      best_samples = snippet.samples;
    }
    if (patience_ref - val >= cfg.min_delta) {
      patience_ref = val;
      patience_left = cfg.patience;
    } else if (--patience_left <= 0) {
      break;
    }
    if (elapsed() > cfg.time_limit_seconds) break;
  }

  snippet.samples = std::move(best_samples);
  return snippet;
}

// Snippet artifact: raw little-endian float32 samples next to a JSON sidecar
// with the full training provenance.
inline void save_snippet(const std::filesystem::path& path, const AttackSnippet& a) {
  nlohmann::json sidecar;
  sidecar["epsilon"] = a.params.epsilon;
  sidecar["length_seconds"] = a.params.length_seconds;
  sidecar["position_seconds"] = a.params.position_seconds;
  sidecar["objective"] = objective_name(a.objective);
  sidecar["delta_horizon"] = a.delta_horizon;
  sidecar["model"] = a.trained_on;
  sidecar["seed"] = a.seed;
  sidecar["config"] = a.config;
  nlohmann::json losses = nlohmann::json::array();
  for (const IterationRecord& r : a.history) {
    losses.push_back({{"train_loss", r.train_loss}, {"val_loss", r.val_loss}});
  }
  sidecar["losses"] = losses;
  audio::Waveform w;
  w.sample_rate = a.sample_rate;
  w.samples = a.samples;
  audio::save_raw_f32(path, w, std::move(sidecar));
}

inline AttackSnippet load_snippet(const std::filesystem::path& path) {
  const audio::Waveform w = audio::load_raw_f32(path);
  std::ifstream side(path.string() + ".json");
  nlohmann::json sidecar = nlohmann::json::parse(side);
  AttackSnippet a;
  a.samples = w.samples;
  a.sample_rate = w.sample_rate;
  a.params.epsilon = sidecar.at("epsilon").get<double>();
  a.params.length_seconds = sidecar.at("length_seconds").get<double>();
  a.params.position_seconds = sidecar.at("position_seconds").get<double>();
  a.objective = sidecar.at("objective").get<std::string>() == "partial"
                    ? Objective::kPartial
                    : Objective::kComplete;
  a.delta_horizon = sidecar.value("delta_horizon", 10);
  a.trained_on = sidecar.value("model", std::string{});
  a.seed = sidecar.value("seed", std::uint64_t{0});
  for (const auto& r : sidecar.value("losses", nlohmann::json::array())) {
    a.history.push_back(
        {r.at("train_loss").get<double>(), r.at("val_loss").get<double>()});
  }
  return a;
}

}  // namespace eosmute::attack
