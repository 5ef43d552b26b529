#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/errors.hpp"
#include "eosmute/waveform.hpp"

namespace eosmute::dsp {

struct MuLawParams {
  double mu = 255.0;
};

struct LowPassParams {
  double cutoff_hz = 7000.0;
  int order = 5;
};

inline double mu_compress_sample(double x, double mu) {
  const double s = (x < 0.0) ? -1.0 : 1.0;
  return s * std::log1p(mu * std::abs(x)) / std::log1p(mu);
}

inline double mu_expand_sample(double x, double mu) {
  const double s = (x < 0.0) ? -1.0 : 1.0;
  return s * (std::pow(mu + 1.0, std::abs(x)) - 1.0) / mu;
}

namespace detail {
inline void check_unit_range(const audio::Waveform& x, const char* op) {
  for (double s : x.samples) {
    if (std::abs(s) > 1.0 + 1e-12) {
      throw DomainError(std::string(op) + ": sample outside [-1, 1]");
    }
  }
}
}  // namespace detail

inline audio::Waveform mu_compress(const audio::Waveform& x, const MuLawParams& p = {}) {
  if (p.mu <= 0.0) throw DomainError("mu_compress: mu must be positive");
  detail::check_unit_range(x, "mu_compress");
  audio::Waveform out = x;
  for (double& s : out.samples) s = mu_compress_sample(s, p.mu);
  return out;
}

inline audio::Waveform mu_expand(const audio::Waveform& x, const MuLawParams& p = {}) {
  if (p.mu <= 0.0) throw DomainError("mu_expand: mu must be positive");
  detail::check_unit_range(x, "mu_expand");
  audio::Waveform out = x;
  for (double& s : out.samples) s = mu_expand_sample(s, p.mu);
  return out;
}

// Rounds to 255 signed 8-bit levels; used between compression and expansion
// to simulate an actual 16-bit to 8-bit codec.
inline audio::Waveform quantize_8bit(const audio::Waveform& x) {
  audio::Waveform out = x;
  for (double& s : out.samples) s = std::round(s * 127.0) / 127.0;
  return out;
}

// Order-n Butterworth low pass realized as a cascade of bilinear-transformed
// second-order sections, applied causally (forward only).
inline audio::Waveform butterworth_lowpass(const audio::Waveform& x, const LowPassParams& p) {
  const double nyquist = x.sample_rate / 2.0;
  if (p.cutoff_hz <= 0.0 || p.cutoff_hz >= nyquist) {
    throw DomainError("butterworth_lowpass: cutoff must be in (0, Nyquist)");
  }
  if (p.order < 1) throw DomainError("butterworth_lowpass: order must be >= 1");

  const double fs = static_cast<double>(x.sample_rate);
  const double warped = 2.0 * fs * std::tan(std::numbers::pi * p.cutoff_hz / fs);

  struct Biquad {
    double b0, b1, b2, a1, a2;  // first-order sections leave b2 = a2 = 0
  };
  std::vector<Biquad> sections;
  const int n = p.order;
  // Conjugate analog pole pairs of the prototype, one section per pair.
  for (int k = 0; k < n / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n);
    const std::complex<double> sp = warped * std::complex<double>(std::cos(theta), std::sin(theta));
    const std::complex<double> zp = (2.0 * fs + sp) / (2.0 * fs - sp);
    const double a1 = -2.0 * zp.real();
    const double a2 = std::norm(zp);
    const double g = (1.0 + a1 + a2) / 4.0;
    sections.push_back({g, 2.0 * g, g, a1, a2});
  }
  if (n % 2 == 1) {
    const double sp = -warped;
    const double zp = (2.0 * fs + sp) / (2.0 * fs - sp);
    const double a1 = -zp;
    const double g = (1.0 + a1) / 2.0;
    sections.push_back({g, g, 0.0, a1, 0.0});
  }

  audio::Waveform out = x;
  for (const Biquad& s : sections) {
    double z1 = 0.0, z2 = 0.0;  // transposed direct form II
    for (double& v : out.samples) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
  }
  return out;
}

using Defence = std::function<audio::Waveform(const audio::Waveform&)>;

// Builds the composition of the named defences, applied in list order.
// Configuration shape: [{"name":"butterworth","cutoff_hz":7000,"order":5}, ...]
inline Defence defence_chain(const nlohmann::json& config) {
  std::vector<Defence> steps;
  if (!config.is_array()) throw ConfigError("defence_chain: configuration must be a list");
  for (const auto& item : config) {
    const std::string name = item.at("name").get<std::string>();
    if (name == "identity") {
      steps.emplace_back([](const audio::Waveform& x) { return x; });
    } else if (name == "mu_compress") {
      MuLawParams p;
      p.mu = item.value("mu", 255.0);
      steps.emplace_back([p](const audio::Waveform& x) { return mu_compress(x, p); });
    } else if (name == "mu_expand") {
      MuLawParams p;
      p.mu = item.value("mu", 255.0);
      steps.emplace_back([p](const audio::Waveform& x) { return mu_expand(x, p); });
    } else if (name == "quantize_8bit") {
      steps.emplace_back([](const audio::Waveform& x) { return quantize_8bit(x); });
    } else if (name == "butterworth") {
      LowPassParams p;
      p.cutoff_hz = item.at("cutoff_hz").get<double>();
      p.order = item.value("order", 5);
      steps.emplace_back([p](const audio::Waveform& x) { return butterworth_lowpass(x, p); });
    } else {
      throw ConfigError("defence_chain: unknown defence '" + name + "'");
    }
  }
  return [steps = std::move(steps)](const audio::Waveform& x) {
    audio::Waveform cur = x;
    for (const auto& step : steps) cur = step(cur);
    return cur;
  };
}

}  // namespace eosmute::dsp
