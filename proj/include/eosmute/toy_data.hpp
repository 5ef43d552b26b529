#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/errors.hpp"
#include "eosmute/model.hpp"
#include "eosmute/toy_model.hpp"
#include "eosmute/wav_io.hpp"
#include "eosmute/waveform.hpp"

namespace eosmute::data {

// Synthetic speech-like corpus: every content word is rendered as a distinct
// tone occupying one 0.16-second slot, utterances end with a fixed two-tone
// chime that the toy model learns as its EOS trigger. Low-amplitude noise,
// quiet chimes and silence slots are mixed in and labeled as the "noise"
// word so that near-silent snippets do not read as end-of-utterance.
struct ToyCorpusConfig {
  int vocab_size = 16;
  int train = 500;
  int validation = 150;
  int test = 250;
  std::uint64_t seed = 7;
  double tone_amplitude = 0.35;
  double chime_amplitude = 0.5;
};

namespace detail {

inline double word_tone_hz(model::TokenId token) {
  // tokens >= 3; geometric spacing keeps every word on its own Mel filters
  return 320.0 * std::pow(2.0, (token - 3) / 4.0);
}

inline void render_tone_slot(std::vector<double>& out, double freq_hz, double amp) {
  const std::size_t start = out.size();
  out.resize(start + model::toy::kSlotSamples, 0.0);
  constexpr int kRamp = 128;
  for (int n = 0; n < model::toy::kSlotSamples; ++n) {
    double env = 1.0;
    if (n < kRamp) env = n / static_cast<double>(kRamp);
    if (n >= model::toy::kSlotSamples - kRamp) {
      env = (model::toy::kSlotSamples - n) / static_cast<double>(kRamp);
    }
    out[start + n] =
        amp * env * std::sin(2.0 * std::numbers::pi * freq_hz * n / audio::kDefaultSampleRate);
  }
}

inline void render_chime_slot(std::vector<double>& out, double amp) {
  const std::size_t start = out.size();
  render_tone_slot(out, 5200.0, amp * 0.6);
  std::vector<double> second;
  render_tone_slot(second, 6400.0, amp * 0.6);
  for (int n = 0; n < model::toy::kSlotSamples; ++n) out[start + n] += second[n];
}

inline void render_noise_slot(std::vector<double>& out, double amp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-amp, amp);
  for (int n = 0; n < model::toy::kSlotSamples; ++n) out.push_back(dist(rng));
}

inline void render_silence_slot(std::vector<double>& out) {
  out.resize(out.size() + model::toy::kSlotSamples, 0.0);
}

}  // namespace detail

struct ToyUtterance {
  audio::Waveform audio;
  std::string text;
};

inline ToyUtterance make_toy_utterance(const model::Vocabulary& vocab,
                                       const ToyCorpusConfig& cfg, std::mt19937_64& rng) {
  const model::TokenId first_word = 3;
  if (vocab.size <= first_word) throw ConfigError("toy corpus needs at least one tone word");
  std::uniform_int_distribution<int> n_words(4, 9);
  std::uniform_int_distribution<model::TokenId> pick_word(first_word, vocab.size - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);

  std::vector<model::TokenId> tokens;
  const int k = n_words(rng);
  for (int i = 0; i < k; ++i) tokens.push_back(pick_word(rng));

  struct Slot {
    enum Kind { kTone, kNoise, kQuietChime, kSilence } kind;
    model::TokenId token;
    double amp;
  };
  std::vector<Slot> slots;
  for (model::TokenId t : tokens) {
    slots.push_back({Slot::kTone, t, cfg.tone_amplitude + jitter(rng)});
  }
  // Robustness slots, all transcribed as the "noise" word (token 2).
  if (unit(rng) < 0.35) {
    std::uniform_int_distribution<int> n_noise(1, 3);
    std::uniform_real_distribution<double> namp(0.005, 0.06);
    const int j = n_noise(rng);
    for (int i = 0; i < j; ++i) {
      slots.insert(slots.begin(), {Slot::kNoise, 2, namp(rng)});
    }
  }
  if (unit(rng) < 0.25) {
    std::uniform_real_distribution<double> camp(0.003, 0.05);
    std::uniform_int_distribution<std::size_t> at(0, slots.size());
    slots.insert(slots.begin() + at(rng), {Slot::kQuietChime, 2, camp(rng)});
  }
  if (unit(rng) < 0.15) {
    std::uniform_int_distribution<std::size_t> at(0, slots.size());
    slots.insert(slots.begin() + at(rng), {Slot::kSilence, 2, 0.0});
  }

  ToyUtterance utt;
  utt.audio.sample_rate = audio::kDefaultSampleRate;
  std::vector<model::TokenId> transcript;
  for (const Slot& s : slots) {
    switch (s.kind) {
      case Slot::kTone:
        detail::render_tone_slot(utt.audio.samples, detail::word_tone_hz(s.token), s.amp);
        break;
      case Slot::kNoise:
        detail::render_noise_slot(utt.audio.samples, s.amp, rng);
        break;
      case Slot::kQuietChime:
        detail::render_chime_slot(utt.audio.samples, s.amp);
        break;
      case Slot::kSilence:
        detail::render_silence_slot(utt.audio.samples);
        break;
    }
    transcript.push_back(s.token);
  }
  detail::render_chime_slot(utt.audio.samples, cfg.chime_amplitude + jitter(rng));
  utt.text = vocab.render(transcript);
  return utt;
}

// Generates WAV files plus a JSON-lines manifest ({"audio","text","split"}
// per line, paths relative to the manifest). Returns the manifest path.
inline std::filesystem::path generate_toy_corpus(const std::filesystem::path& out_dir,
                                                 const ToyCorpusConfig& cfg = {}) {
  namespace fs = std::filesystem;
  const model::Vocabulary vocab = model::toy::make_toy_vocabulary(cfg.vocab_size);
  fs::create_directories(out_dir / "audio");
  std::mt19937_64 rng(cfg.seed);
  const fs::path manifest_path = out_dir / "manifest.jsonl";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw DecodeError("cannot write manifest: " + manifest_path.string());
  int counter = 0;
  auto emit_split = [&](const char* split, int count) {
    for (int i = 0; i < count; ++i) {
      const ToyUtterance utt = make_toy_utterance(vocab, cfg, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "audio/utt_%05d.wav", counter++);
      audio::save_wav(out_dir / name, utt.audio);
      nlohmann::json line = {{"audio", name}, {"text", utt.text}, {"split", split}};
      manifest << line.dump() << "\n";
    }
  };
  emit_split("train", cfg.train);
  emit_split("validation", cfg.validation);
  emit_split("test", cfg.test);
  return manifest_path;
}

}  // namespace eosmute::data
