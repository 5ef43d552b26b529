#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include "eosmute/mel.hpp"
#include "eosmute/wav_io.hpp"
#include "eosmute/waveform.hpp"

using namespace eosmute;
using namespace eosmute::audio;

namespace {

Waveform make_tone(double hz, double seconds, int rate, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / rate);
  }
  return w;
}

// Frequency estimate from zero-crossing count over the analysis span.
double estimate_tone_hz(const Waveform& w, std::size_t begin, std::size_t end) {
  int crossings = 0;
  for (std::size_t i = begin + 1; i < end; ++i) {
    if ((w.samples[i - 1] < 0.0 && w.samples[i] >= 0.0) ||
        (w.samples[i - 1] >= 0.0 && w.samples[i] < 0.0)) {
      ++crossings;
    }
  }
  const double span_seconds = static_cast<double>(end - begin) / w.sample_rate;
  return crossings / (2.0 * span_seconds);
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "eosmute_audio_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("seconds_to_samples rounds and guards the domain") {
  CHECK(seconds_to_samples(0.64, 16000) == 10240);
  CHECK(seconds_to_samples(0.0, 16000) == 0);
  CHECK(seconds_to_samples(0.4, 16000) == 6400);
  CHECK_THROWS_AS(seconds_to_samples(-0.1, 16000), DomainError);
  CHECK_THROWS_AS(seconds_to_samples(1.0, 0), DomainError);
}

TEST_CASE("seconds_to_samples is additive on integral products") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> ms(0, 4000);
  for (int trial = 0; trial < 200; ++trial) {
    const double s1 = ms(rng) / 1000.0;  // integral sample counts at 16 kHz
    const double s2 = ms(rng) / 1000.0;
    CHECK(seconds_to_samples(s1 + s2, 16000) ==
          seconds_to_samples(s1, 16000) + seconds_to_samples(s2, 16000));
  }
}

TEST_CASE("splice_snippet prepends exactly at position 0") {
  Waveform x;
  x.samples.resize(100);
  for (int i = 0; i < 100; ++i) x.samples[i] = 0.01 * i;
  std::vector<double> a(10, 0.5);
  const Waveform out = splice_snippet(x, a, x.sample_rate, 0.0);
  REQUIRE(out.samples.size() == 110);
  for (int i = 0; i < 10; ++i) CHECK(out.samples[i] == 0.5);
  for (int i = 0; i < 100; ++i) CHECK(out.samples[10 + i] == x.samples[i]);
}

TEST_CASE("splice_snippet with empty snippet is the identity") {
  Waveform x = make_tone(440.0, 0.05, 16000);
  const Waveform out = splice_snippet(x, std::span<const double>{}, 16000, 0.3);
  CHECK(out.samples == x.samples);
}

TEST_CASE("splice_snippet places the snippet at the sample index of T") {
  Waveform x;
  x.samples.assign(16000 * 2, 0.0);
  std::vector<double> a(37, 1.0);
  const Waveform out = splice_snippet(x, a, 16000, 0.5);
  REQUIRE(out.samples.size() == x.samples.size() + a.size());
  for (std::size_t i = 8000; i < 8000 + a.size(); ++i) CHECK(out.samples[i] == 1.0);
  CHECK(out.samples[7999] == 0.0);
  CHECK(out.samples[8000 + a.size()] == 0.0);
}

TEST_CASE("splice_snippet length additivity and prefix property") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(0, 3000);
  for (int trial = 0; trial < 25; ++trial) {
    Waveform x;
    x.samples.resize(len(rng) + 1);
    for (double& s : x.samples) s = u(rng);
    std::vector<double> a(len(rng));
    for (double& s : a) s = u(rng);
    const double pos = 0.5 * (u(rng) + 1.0);
    const Waveform out = splice_snippet(x, a, 16000, pos);
    CHECK(out.samples.size() == x.samples.size() + a.size());
    const Waveform pre = splice_snippet(x, a, 16000, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(pre.samples[i] == a[i]);
  }
}

TEST_CASE("splice_snippet contract errors") {
  Waveform x = make_tone(100.0, 0.01, 16000);
  std::vector<double> a(4, 0.0);
  CHECK_THROWS_AS(splice_snippet(x, a, 8000, 0.0), ContractError);
  CHECK_THROWS_AS(splice_snippet(x, a, 16000, -0.1), ContractError);
  CHECK_THROWS_AS(splice_snippet(x, a, 16000, 1.5), ContractError);
}

TEST_CASE("load_waveform reads a one-second 16 kHz file back sample-exact in length") {
  const auto path = temp_dir() / "one_second.wav";
  Waveform w = make_tone(440.0, 1.0, 16000, 0.25);
  save_wav(path, w);
  const Waveform back = load_waveform(path);
  CHECK(back.samples.size() == 16000);
  CHECK(back.sample_rate == 16000);
}

TEST_CASE("load_waveform keeps digital silence at exactly zero") {
  const auto path = temp_dir() / "silence.wav";
  Waveform w;
  w.samples.assign(8000, 0.0);
  save_wav(path, w);
  const Waveform back = load_waveform(path);
  REQUIRE(back.samples.size() == 8000);
  for (double s : back.samples) CHECK(s == 0.0);
}

TEST_CASE("load_waveform resamples 8 kHz input to 16 kHz preserving tone frequency") {
  const auto path = temp_dir() / "tone_8k.wav";
  const Waveform src = make_tone(440.0, 1.0, 8000, 0.5);
  save_wav(path, src);
  const Waveform back = load_waveform(path, 16000);
  REQUIRE(back.sample_rate == 16000);
  CHECK(back.samples.size() == 16000);
  // Zero-crossing frequency estimate over the interior (skips filter edges).
  const double hz = estimate_tone_hz(back, 800, back.samples.size() - 800);
  CHECK(std::abs(hz - 440.0) < 1.0);
}

TEST_CASE("resample preserves a mid-band tone amplitude") {
  const Waveform src = make_tone(1000.0, 0.5, 48000, 0.5);
  const Waveform out = resample(src, 16000);
  double peak = 0.0;
  for (std::size_t i = 400; i + 400 < out.samples.size(); ++i) {
    peak = std::max(peak, std::abs(out.samples[i]));
  }
  CHECK(peak == Catch::Approx(0.5).margin(0.02));
  const double hz = estimate_tone_hz(out, 400, out.samples.size() - 400);
  CHECK(std::abs(hz - 1000.0) < 1.0);
}

TEST_CASE("load_waveform rejects corrupt and zero-length files") {
  const auto bad = temp_dir() / "garbage.wav";
  {
    std::ofstream out(bad, std::ios::binary);
    out << "this is not audio data at all";
  }
  CHECK_THROWS_AS(load_waveform(bad), DecodeError);
  CHECK_THROWS_AS(load_waveform(temp_dir() / "does_not_exist.wav"), DecodeError);

  const auto empty = temp_dir() / "empty.wav";
  {
    Waveform w;
    w.samples.assign(1, 0.0);
    save_wav(empty, w);
    // Truncate the data chunk to zero frames by rewriting the file with no samples.
    std::ofstream out(empty, std::ios::binary | std::ios::trunc);
    std::string body = "RIFF";
    auto put32 = [&](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) body.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    auto put16 = [&](std::uint16_t v) {
      body.push_back(static_cast<char>(v & 0xff));
      body.push_back(static_cast<char>((v >> 8) & 0xff));
    };
    put32(36);
    body += "WAVEfmt ";
    put32(16);
    put16(1);
    put16(1);
    put32(16000);
    put32(32000);
    put16(2);
    put16(16);
    body += "data";
    put32(0);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
  }
  CHECK_THROWS_AS(load_waveform(empty), DecodeError);
}

TEST_CASE("raw f32 interchange round-trips samples at float precision") {
  const auto path = temp_dir() / "clip.f32";
  Waveform w = make_tone(700.0, 0.05, 16000, 0.3);
  save_raw_f32(path, w);
  const Waveform back = load_raw_f32(path);
  REQUIRE(back.samples.size() == w.samples.size());
  CHECK(back.sample_rate == 16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    CHECK(back.samples[i] == static_cast<double>(static_cast<float>(w.samples[i])));
  }
}

TEST_CASE("log_mel of silence sits at the log floor everywhere") {
  Waveform w;
  w.samples.assign(16000, 0.0);
  const MelConfig cfg;
  const MelSpectrogram spec = log_mel(w, cfg);
  const double floor = std::log(cfg.log_floor);
  REQUIRE(spec.n_mels == 80);
  for (double v : spec.frames) CHECK(v == Catch::Approx(floor).margin(1e-12));
}

TEST_CASE("log_mel frame count is ceil(samples/hop): 30 s at hop 160 gives 3000") {
  MelAnalyzer analyzer(MelConfig{}, 16000);
  CHECK(analyzer.frame_count(30 * 16000) == 3000);
  CHECK(analyzer.frame_count(1) == 1);
  CHECK(analyzer.frame_count(161) == 2);
}

TEST_CASE("log_mel puts the per-frame maximum in the Mel filter covering 1 kHz") {
  const Waveform w = make_tone(1000.0, 0.5, 16000, 0.5);
  MelAnalyzer analyzer(MelConfig{}, 16000);
  // 1 kHz lands exactly on FFT bin 32 (16000/512 = 31.25 Hz per bin); the
  // expected winner is the filter with the largest weight at that bin.
  const int tone_bin = 32;
  int expected = 0;
  double best_w = -1.0;
  for (int m = 0; m < 80; ++m) {
    const double fw = analyzer.filter_weight(m, tone_bin);
    if (fw > best_w) {
      best_w = fw;
      expected = m;
    }
  }
  REQUIRE(best_w > 0.0);
  const MelSpectrogram spec = analyzer.compute(w);
  for (int f = 2; f < spec.n_frames - 3; ++f) {
    int argmax = 0;
    for (int m = 1; m < spec.n_mels; ++m) {
      if (spec.at(f, m) > spec.at(f, argmax)) argmax = m;
    }
    CHECK(argmax == expected);
  }
}

TEST_CASE("log_mel is deterministic") {
  const Waveform w = make_tone(333.0, 0.3, 16000, 0.4);
  const MelSpectrogram a = log_mel(w);
  const MelSpectrogram b = log_mel(w);
  CHECK(a.frames == b.frames);
}

TEST_CASE("log_mel is shift-covariant at hop granularity") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Waveform w;
  w.samples.resize(16000);
  for (double& s : w.samples) s = u(rng);

  Waveform shifted;
  shifted.samples.assign(160, 0.0);
  shifted.samples.insert(shifted.samples.end(), w.samples.begin(), w.samples.end());

  const MelSpectrogram a = log_mel(w);
  const MelSpectrogram b = log_mel(shifted);
  REQUIRE(b.n_frames == a.n_frames + 1);
  // Interior columns: frame f of the original appears as frame f+1 shifted.
  for (int f = 0; f + 3 < a.n_frames; ++f) {
    for (int m = 0; m < a.n_mels; ++m) {
      const double ref = a.at(f, m);
      const double got = b.at(f + 1, m);
      CHECK(std::abs(got - ref) <= 1e-5 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("log_mel pads audio shorter than one window instead of failing") {
  Waveform w = make_tone(500.0, 0.005, 16000, 0.3);  // 80 samples < 400 window
  REQUIRE(w.samples.size() == 80);
  const MelSpectrogram spec = log_mel(w);
  CHECK(spec.n_frames == 1);
  for (double v : spec.frames) CHECK(std::isfinite(v));
}

TEST_CASE("log_mel rejects empty input") {
  Waveform w;
  CHECK_THROWS_AS(log_mel(w), ContractError);
}

TEST_CASE("mel analyzer backprop matches finite differences on the frame chain") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  std::vector<double> samples(1600);
  for (double& s : samples) s = u(rng);
  MelAnalyzer analyzer(MelConfig{}, 16000);
  const int fb = 0;
  const int fe = analyzer.frame_count(samples.size());
  const MelSpectrogram base = analyzer.compute_frames(samples, fb, fe);

  // loss = sum of all log-Mel entries → grad rows of ones.
  std::vector<double> grad_rows(base.frames.size(), 1.0);
  std::vector<double> sample_grad(samples.size(), 0.0);
  analyzer.backprop_frames(samples, fb, fe, grad_rows, sample_grad);

  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  const double h = 1e-5;
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t i = pick(rng);
    auto loss_at = [&](double v) {
      std::vector<double> mod = samples;
      mod[i] = v;
      const MelSpectrogram s = analyzer.compute_frames(mod, fb, fe);
      double acc = 0.0;
      for (double e : s.frames) acc += e;
      return acc;
    };
    const double fd = (loss_at(samples[i] + h) - loss_at(samples[i] - h)) / (2.0 * h);
    const double scale = std::max({1.0, std::abs(fd), std::abs(sample_grad[i])});
    CHECK(std::abs(fd - sample_grad[i]) / scale < 1e-4);
  }
}
