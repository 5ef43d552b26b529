#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/errors.hpp"
#include "eosmute/waveform.hpp"

namespace eosmute::audio {

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

// Windowed-sinc resampler. Frequencies below the lower Nyquist are preserved.
inline Waveform resample(const Waveform& x, int target_rate) {
  if (target_rate <= 0) throw DomainError("resample: non-positive target rate");
  if (x.sample_rate == target_rate) return x;
  const double ratio = static_cast<double>(x.sample_rate) / target_rate;
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(x.samples.size()) / ratio));
  constexpr int kTaps = 24;  // one-sided
  // Anti-aliasing cutoff at the lower of the two Nyquist frequencies.
  const double fc = std::min(1.0, 1.0 / ratio) * 0.5;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len, 0.0);
  for (std::size_t m = 0; m < out_len; ++m) {
    const double t = m * ratio;  // position in input samples
    const auto n0 = static_cast<std::int64_t>(std::floor(t));
    double acc = 0.0;
    for (std::int64_t n = n0 - kTaps + 1; n <= n0 + kTaps; ++n) {
      const double d = t - n;
      double sinc = (std::abs(d) < 1e-12)
                        ? 2.0 * fc
                        : std::sin(2.0 * std::numbers::pi * fc * d) / (std::numbers::pi * d);
      const double hann =
          0.5 + 0.5 * std::cos(std::numbers::pi * d / kTaps);  // |d| <= kTaps here
      const double w = sinc * hann;
      if (n >= 0 && n < static_cast<std::int64_t>(x.samples.size())) {
        acc += w * x.samples[static_cast<std::size_t>(n)];
      }
    }
    out.samples[m] = acc;  // kernel integrates to ~1 within the passband
  }
  for (double& s : out.samples) s = std::clamp(s, -1.0, 1.0);
  return out;
}

// Reads a 16-bit PCM WAV file, downmixing to mono and resampling to
// `target_rate` when needed.
inline Waveform load_waveform(const std::filesystem::path& path,
                              int target_rate = kDefaultSampleRate) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DecodeError("not a RIFF/WAVE file: " + path.string());
  }
  std::size_t pos = 12;
  int channels = 0;
  int rate = 0;
  int bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = detail::read_u32(bytes.data() + pos + 4);
    if (pos + 8 + len > bytes.size()) throw DecodeError("truncated WAV chunk: " + path.string());
    if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
      const unsigned char* f = bytes.data() + pos + 8;
      const int format = detail::read_u16(f);
      channels = detail::read_u16(f + 2);
      rate = static_cast<int>(detail::read_u32(f + 4));
      bits = detail::read_u16(f + 14);
      if (format != 1 || bits != 16) {
        throw DecodeError("unsupported WAV format (need 16-bit PCM): " + path.string());
      }
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (channels <= 0 || rate <= 0 || data == nullptr) {
    throw DecodeError("missing fmt/data chunk: " + path.string());
  }
  const std::size_t n_frames = data_len / (2 * static_cast<std::size_t>(channels));
  if (n_frames == 0) throw DecodeError("zero-length audio: " + path.string());
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + 2 * (i * channels + c);
      const auto v = static_cast<std::int16_t>(detail::read_u16(p));
      acc += v / 32768.0;
    }
    w.samples[i] = acc / channels;
  }
  if (rate != target_rate) w = resample(w, target_rate);
  return w;
}

inline void save_wav(const std::filesystem::path& path, const Waveform& w) {
  std::string body;
  body.reserve(44 + 2 * w.samples.size());
  body += "RIFF";
  detail::put_u32(body, static_cast<std::uint32_t>(36 + 2 * w.samples.size()));
  body += "WAVEfmt ";
  detail::put_u32(body, 16);
  detail::put_u16(body, 1);  // PCM
  detail::put_u16(body, 1);  // mono
  detail::put_u32(body, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(body, static_cast<std::uint32_t>(w.sample_rate * 2));
  detail::put_u16(body, 2);
  detail::put_u16(body, 16);
  body += "data";
  detail::put_u32(body, static_cast<std::uint32_t>(2 * w.samples.size()));
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    detail::put_u16(body, static_cast<std::uint16_t>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DecodeError("cannot write file: " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
}

// Raw interchange format: little-endian float32 samples plus a JSON sidecar
// carrying at least {"sample_rate": ...}.
inline void save_raw_f32(const std::filesystem::path& path, const Waveform& w,
                         nlohmann::json extra_sidecar = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DecodeError("cannot write file: " + path.string());
  for (double s : w.samples) {
    const float f = static_cast<float>(s);
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  nlohmann::json sidecar = std::move(extra_sidecar);
  sidecar["sample_rate"] = w.sample_rate;
  std::ofstream side(path.string() + ".json");
  side << sidecar.dump(2) << "\n";
}

inline Waveform load_raw_f32(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() % 4 != 0) throw DecodeError("raw f32 file size not a multiple of 4");
  std::ifstream side(path.string() + ".json");
  if (!side) throw DecodeError("missing sidecar: " + path.string() + ".json");
  nlohmann::json sidecar = nlohmann::json::parse(side);
  Waveform w;
  w.sample_rate = sidecar.at("sample_rate").get<int>();
  w.samples.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 4 * i, 4);
    w.samples[i] = f;
  }
  return w;
}

}  // namespace eosmute::audio
