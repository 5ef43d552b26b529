#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "eosmute/errors.hpp"
#include "eosmute/waveform.hpp"

namespace eosmute::audio {

struct MelConfig {
  int n_mels = 80;
  int window = 400;    // 25 ms at 16 kHz
  int hop = 160;       // 10 ms
  int fft_size = 512;  // power of two, >= window
  double log_floor = 1e-10;
};

struct MelSpectrogram {
  // Frame-major: value(frame, mel) = frames[frame * n_mels + mel].
  std::vector<double> frames;
  int n_mels = 0;
  int n_frames = 0;
  double hop_seconds = 0.0;

  double at(int frame, int mel) const { return frames[frame * n_mels + mel]; }
};

namespace detail {

// Unnormalized radix-2 transform; inverse uses conjugated twiddles (no 1/N).
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / len * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace detail

// STFT + triangular Mel filterbank + log with additive floor. The analyzer
// also exposes the adjoint of the whole chain so differentiable models can
// backpropagate losses to raw samples.
class MelAnalyzer {
public:
  MelAnalyzer(MelConfig cfg, int sample_rate)
      : cfg_(cfg), sample_rate_(sample_rate), n_bins_(cfg.fft_size / 2 + 1) {
    if (cfg_.hop <= 0 || cfg_.window < cfg_.hop || cfg_.fft_size < cfg_.window ||
        (cfg_.fft_size & (cfg_.fft_size - 1)) != 0) {
      throw ConfigError("MelAnalyzer: invalid window/hop/fft configuration");
    }
    window_.resize(cfg_.window);
    for (int n = 0; n < cfg_.window; ++n) {
      window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg_.window);
    }
    build_filterbank();
  }

  const MelConfig& config() const { return cfg_; }
  int sample_rate() const { return sample_rate_; }
  int n_bins() const { return n_bins_; }
  double floor_value() const { return std::log(cfg_.log_floor); }
  double filter_center_hz(int mel) const { return centers_hz_[mel]; }

  double filter_weight(int mel, int fft_bin) const {
    const auto& [k0, weights] = filters_[mel];
    if (fft_bin < k0 || fft_bin >= k0 + static_cast<int>(weights.size())) return 0.0;
    return weights[fft_bin - k0];
  }

  int frame_count(std::size_t n_samples) const {
    return static_cast<int>((n_samples + cfg_.hop - 1) / cfg_.hop);
  }

  MelSpectrogram compute(const Waveform& x) const {
    if (x.samples.empty()) throw ContractError("log_mel: empty waveform");
    const int nf = frame_count(x.samples.size());
    return compute_frames(x.samples, 0, nf);
  }

  // Log-Mel energies for frames [frame_begin, frame_end); frames past the end
  // of the signal read zero padding.
  MelSpectrogram compute_frames(std::span<const double> samples, int frame_begin,
                                int frame_end) const {
    MelSpectrogram out;
    out.n_mels = cfg_.n_mels;
    out.n_frames = frame_end - frame_begin;
    out.hop_seconds = static_cast<double>(cfg_.hop) / sample_rate_;
    out.frames.resize(static_cast<std::size_t>(out.n_frames) * cfg_.n_mels);
    std::vector<std::complex<double>> buf(cfg_.fft_size);
    std::vector<double> power(n_bins_);
    for (int f = frame_begin; f < frame_end; ++f) {
      frame_spectrum(samples, f, buf);
      for (int k = 0; k < n_bins_; ++k) power[k] = std::norm(buf[k]);
      double* row = out.frames.data() + static_cast<std::size_t>(f - frame_begin) * cfg_.n_mels;
      for (int m = 0; m < cfg_.n_mels; ++m) {
        double e = 0.0;
        const auto& [k0, weights] = filters_[m];
        for (std::size_t j = 0; j < weights.size(); ++j) e += weights[j] * power[k0 + j];
        row[m] = std::log(e + cfg_.log_floor);
      }
    }
    return out;
  }

  // Accumulates d(loss)/d(sample) into `sample_grad` given d(loss)/d(log-Mel)
  // for frames [frame_begin, frame_end). `grad_rows` is frame-major like
  // MelSpectrogram::frames.
  void backprop_frames(std::span<const double> samples, int frame_begin, int frame_end,
                       std::span<const double> grad_rows,
                       std::span<double> sample_grad) const {
    std::vector<std::complex<double>> buf(cfg_.fft_size);
    std::vector<std::complex<double>> gbuf(cfg_.fft_size);
    std::vector<double> power(n_bins_);
    std::vector<double> d_power(n_bins_);
    for (int f = frame_begin; f < frame_end; ++f) {
      frame_spectrum(samples, f, buf);
      for (int k = 0; k < n_bins_; ++k) power[k] = std::norm(buf[k]);
      const double* grow =
          grad_rows.data() + static_cast<std::size_t>(f - frame_begin) * cfg_.n_mels;
      std::fill(d_power.begin(), d_power.end(), 0.0);
      for (int m = 0; m < cfg_.n_mels; ++m) {
        double e = 0.0;
        const auto& [k0, weights] = filters_[m];
        for (std::size_t j = 0; j < weights.size(); ++j) e += weights[j] * power[k0 + j];
        const double de = grow[m] / (e + cfg_.log_floor);
        for (std::size_t j = 0; j < weights.size(); ++j) d_power[k0 + j] += weights[j] * de;
      }
      // d/d(re,im) of |X|^2, then the adjoint DFT back to the frame.
      const int half = cfg_.fft_size / 2;
      std::fill(gbuf.begin(), gbuf.end(), std::complex<double>(0.0, 0.0));
      gbuf[0] = {2.0 * buf[0].real() * d_power[0], 0.0};
      gbuf[half] = {2.0 * buf[half].real() * d_power[half], 0.0};
      for (int k = 1; k < half; ++k) {
        const std::complex<double> g = 2.0 * d_power[k] * buf[k];
        gbuf[k] = 0.5 * g;
        gbuf[cfg_.fft_size - k] = std::conj(gbuf[k]);
      }
      detail::fft_radix2(gbuf, /*inverse=*/true);
      const std::int64_t start = static_cast<std::int64_t>(f) * cfg_.hop;
      for (int n = 0; n < cfg_.window; ++n) {
        const std::int64_t idx = start + n;
        if (idx >= 0 && idx < static_cast<std::int64_t>(sample_grad.size())) {
          sample_grad[idx] += gbuf[n].real() * window_[n];
        }
      }
    }
  }

private:
  void frame_spectrum(std::span<const double> samples, int frame,
                      std::vector<std::complex<double>>& buf) const {
    const std::int64_t start = static_cast<std::int64_t>(frame) * cfg_.hop;
    for (int n = 0; n < cfg_.fft_size; ++n) {
      double v = 0.0;
      if (n < cfg_.window) {
        const std::int64_t idx = start + n;
        if (idx >= 0 && idx < static_cast<std::int64_t>(samples.size())) {
          v = samples[idx] * window_[n];
        }
      }
      buf[n] = {v, 0.0};
    }
    detail::fft_radix2(buf, /*inverse=*/false);
  }

  void build_filterbank() {
    const double nyquist = sample_rate_ / 2.0;
    const double mel_max = detail::hz_to_mel(nyquist);
    std::vector<double> pts(cfg_.n_mels + 2);
    for (int i = 0; i < cfg_.n_mels + 2; ++i) {
      pts[i] = detail::mel_to_hz(mel_max * i / (cfg_.n_mels + 1));
    }
    filters_.resize(cfg_.n_mels);
    centers_hz_.resize(cfg_.n_mels);
    const double bin_hz = static_cast<double>(sample_rate_) / cfg_.fft_size;
    for (int m = 0; m < cfg_.n_mels; ++m) {
      centers_hz_[m] = pts[m + 1];
      std::vector<double> weights;
      int k0 = -1;
      for (int k = 0; k < n_bins_; ++k) {
        const double f = k * bin_hz;
        double w = 0.0;
        if (f > pts[m] && f < pts[m + 2]) {
          w = (f <= pts[m + 1]) ? (f - pts[m]) / (pts[m + 1] - pts[m])
                                : (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
        }
        if (w > 0.0) {
          if (k0 < 0) k0 = k;
          weights.push_back(w);
        } else if (k0 >= 0) {
          break;
        }
      }
      if (k0 < 0) k0 = 0;
      filters_[m] = {k0, std::move(weights)};
    }
  }

  MelConfig cfg_;
  int sample_rate_;
  int n_bins_;
  std::vector<double> window_;
  std::vector<std::pair<int, std::vector<double>>> filters_;
  std::vector<double> centers_hz_;
};

inline MelSpectrogram log_mel(const Waveform& x, const MelConfig& cfg = MelConfig{}) {
  return MelAnalyzer(cfg, x.sample_rate).compute(x);
}

}  // namespace eosmute::audio
