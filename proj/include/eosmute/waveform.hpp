#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "eosmute/errors.hpp"

namespace eosmute::audio {

inline constexpr int kDefaultSampleRate = 16000;

// Mono audio, samples nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

inline std::int64_t seconds_to_samples(double seconds, int sample_rate) {
  if (seconds < 0.0) {
    throw DomainError("seconds_to_samples: negative duration");
  }
  if (sample_rate <= 0) {
    throw DomainError("seconds_to_samples: non-positive sample rate");
  }
  return static_cast<std::int64_t>(std::llround(seconds * sample_rate));
}

// Splices `snippet` into `x` at position_seconds. No overlap-add: the output
// is x[0:p] ++ snippet ++ x[p:], so position 0 is a pure prepend.
inline Waveform splice_snippet(const Waveform& x, std::span<const double> snippet,
                               int snippet_sample_rate, double position_seconds) {
  if (snippet_sample_rate != x.sample_rate) {
    throw ContractError("splice_snippet: sample-rate mismatch");
  }
  if (position_seconds < 0.0 || position_seconds > 1.0) {
    throw ContractError("splice_snippet: position must be in [0, 1] seconds");
  }
  const auto p = static_cast<std::size_t>(
      std::min<std::int64_t>(seconds_to_samples(position_seconds, x.sample_rate),
                             static_cast<std::int64_t>(x.samples.size())));
  Waveform out;
  out.sample_rate = x.sample_rate;
  out.samples.reserve(x.samples.size() + snippet.size());
  out.samples.insert(out.samples.end(), x.samples.begin(), x.samples.begin() + p);
  out.samples.insert(out.samples.end(), snippet.begin(), snippet.end());
  out.samples.insert(out.samples.end(), x.samples.begin() + p, x.samples.end());
  return out;
}

}  // namespace eosmute::audio
