#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/errors.hpp"
#include "eosmute/model.hpp"

namespace eosmute::metrics {

struct WordNormalization {
  bool lowercase = true;
  bool strip_punctuation = true;
};

inline std::vector<std::string> normalize_words(const std::string& text,
                                                const WordNormalization& norm = {}) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      continue;
    }
    if (norm.strip_punctuation && std::ispunct(static_cast<unsigned char>(c))) continue;
    cur.push_back(norm.lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                                 : c);
  }
  flush();
  return words;
}

// Word-level edit distance over reference length. Not clipped at 1: heavy
// insertion can push it above 1.
inline double wer(const std::vector<std::string>& hypothesis,
                  const std::vector<std::string>& reference) {
  if (reference.empty()) throw DomainError("wer: empty reference");
  const std::size_t h = hypothesis.size();
  const std::size_t r = reference.size();
  std::vector<std::size_t> prev(r + 1), cur(r + 1);
  for (std::size_t j = 0; j <= r; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= h; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= r; ++j) {
      const std::size_t sub = prev[j - 1] + (hypothesis[i - 1] == reference[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[r]) / r;
}

inline double wer(const std::string& hypothesis, const std::string& reference,
                  const WordNormalization& norm = {}) {
  return wer(normalize_words(hypothesis, norm), normalize_words(reference, norm));
}

// Sentence BLEU with n-grams up to 4, geometric mean over the orders present
// in the hypothesis, brevity penalty, and 1e-9 added to zero match counts.
// Defined as exactly 0 for an empty hypothesis.
inline double bleu_prime(const std::vector<std::string>& hypothesis,
                         const std::vector<std::string>& reference) {
  if (reference.empty()) throw DomainError("bleu_prime: empty reference");
  if (hypothesis.empty()) return 0.0;
  constexpr int kMaxOrder = 4;
  constexpr double kSmoothing = 1e-9;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    const std::int64_t total = static_cast<std::int64_t>(hypothesis.size()) - n + 1;
    if (total <= 0) break;
    // Clipped (modified) n-gram matches.
    std::vector<std::vector<std::string>> ref_grams;
    for (std::size_t j = 0; j + n <= reference.size(); ++j) {
      ref_grams.emplace_back(reference.begin() + j, reference.begin() + j + n);
    }
    std::vector<bool> used(ref_grams.size(), false);
    std::int64_t matches = 0;
    for (std::int64_t i = 0; i < total; ++i) {
      for (std::size_t j = 0; j < ref_grams.size(); ++j) {
        if (used[j]) continue;
        if (std::equal(ref_grams[j].begin(), ref_grams[j].end(), hypothesis.begin() + i)) {
          used[j] = true;
          ++matches;
          break;
        }
      }
    }
    double precision = static_cast<double>(matches) / total;
    if (matches == 0) precision = kSmoothing / total;
    log_sum += std::log(precision);
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double geo_mean = std::exp(log_sum / orders);
  const double bp = hypothesis.size() >= reference.size()
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(reference.size()) /
                                             hypothesis.size());
  return std::clamp(bp * geo_mean, 0.0, 1.0);
}

inline double bleu_prime(const std::string& hypothesis, const std::string& reference,
                         const WordNormalization& norm = {}) {
  return bleu_prime(normalize_words(hypothesis, norm), normalize_words(reference, norm));
}

struct EvalRecord {
  model::TranscriptionResult transcription;
  std::string reference;
};

struct MetricBundle {
  double empty_rate = 0.0;
  double asl = 0.0;
  double bleu = 0.0;
  double wer = 0.0;
};

inline void to_json(nlohmann::json& j, const MetricBundle& b) {
  j = {{"empty_rate", b.empty_rate}, {"asl", b.asl}, {"bleu", b.bleu}, {"wer", b.wer}};
}

inline void from_json(const nlohmann::json& j, MetricBundle& b) {
  b.empty_rate = j.at("empty_rate").get<double>();
  b.asl = j.at("asl").get<double>();
  b.bleu = j.at("bleu").get<double>();
  b.wer = j.at("wer").get<double>();
}

inline double empty_rate(const std::vector<model::TranscriptionResult>& results) {
  if (results.empty()) throw DomainError("empty_rate: no results");
  std::size_t n = 0;
  for (const auto& r : results) n += r.empty_transcription() ? 1 : 0;
  return static_cast<double>(n) / results.size();
}

inline double avg_seq_len(const std::vector<model::TranscriptionResult>& results) {
  if (results.empty()) throw DomainError("avg_seq_len: no results");
  double sum = 0.0;
  for (const auto& r : results) sum += static_cast<double>(r.length());
  return sum / results.size();
}

inline MetricBundle bundle(const std::vector<EvalRecord>& records,
                           const WordNormalization& norm = {}) {
  if (records.empty()) throw DomainError("bundle: no records");
  MetricBundle b;
  for (const EvalRecord& rec : records) {
    b.empty_rate += rec.transcription.empty_transcription() ? 1.0 : 0.0;
    b.asl += static_cast<double>(rec.transcription.length());
    b.bleu += bleu_prime(rec.transcription.text, rec.reference, norm);
    b.wer += wer(rec.transcription.text, rec.reference, norm);
  }
  const double n = static_cast<double>(records.size());
  b.empty_rate /= n;
  b.asl /= n;
  b.bleu /= n;
  b.wer /= n;
  return b;
}

// Elementwise attacked - clean; positive empty/wer deltas and negative
// asl/bleu deltas mean the attack bit.
using MetricDelta = MetricBundle;

inline MetricDelta attack_power(const MetricBundle& attacked, const MetricBundle& clean) {
  return {attacked.empty_rate - clean.empty_rate, attacked.asl - clean.asl,
          attacked.bleu - clean.bleu, attacked.wer - clean.wer};
}

// Percent of attack power retained per metric; metrics whose baseline delta
// is (near) zero are reported as undefined rather than infinite.
struct RetainedPower {
  std::optional<double> empty_rate;
  std::optional<double> asl;
  std::optional<double> bleu;
  std::optional<double> wer;
};

inline RetainedPower retained_power(const MetricDelta& alpha_d, const MetricDelta& alpha_base) {
  constexpr double kZero = 1e-12;
  auto ratio = [&](double d, double base) -> std::optional<double> {
    if (std::abs(base) < kZero) return std::nullopt;
    return 100.0 * d / base;
  };
  return {ratio(alpha_d.empty_rate, alpha_base.empty_rate), ratio(alpha_d.asl, alpha_base.asl),
          ratio(alpha_d.bleu, alpha_base.bleu), ratio(alpha_d.wer, alpha_base.wer)};
}

inline void to_json(nlohmann::json& j, const RetainedPower& r) {
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v.has_value()) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  j = nlohmann::json::object();
  put("empty_rate", r.empty_rate);
  put("asl", r.asl);
  put("bleu", r.bleu);
  put("wer", r.wer);
}

struct DefenceReport {
  std::string defence;
  MetricBundle attacked;
  MetricBundle clean;
  MetricDelta alpha_base;
  MetricDelta alpha_d;
  RetainedPower alpha_pct;
};

inline void to_json(nlohmann::json& j, const DefenceReport& r) {
  j = {{"defence", r.defence},     {"attacked", r.attacked},
       {"clean", r.clean},         {"alpha_base", r.alpha_base},
       {"alpha_d", r.alpha_d},     {"alpha_pct", r.alpha_pct}};
}

}  // namespace eosmute::metrics
