#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eosmute/errors.hpp"
#include "eosmute/waveform.hpp"

namespace eosmute::model {

using TokenId = int;

inline constexpr int kDefaultMaxTokens = 224;

struct Vocabulary {
  int size = 0;
  TokenId eos_id = -1;
  std::vector<TokenId> bos_sequence;
  // One rendering per token id; special tokens render to the empty string.
  std::vector<std::string> words;

  bool is_special(TokenId t) const {
    if (t == eos_id) return true;
    return std::find(bos_sequence.begin(), bos_sequence.end(), t) != bos_sequence.end();
  }

  std::vector<TokenId> tokenize(const std::string& text) const {
    std::vector<TokenId> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      while (pos < text.size() && text[pos] == ' ') ++pos;
      std::size_t end = text.find(' ', pos);
      if (end == std::string::npos) end = text.size();
      if (end > pos) {
        const std::string word = text.substr(pos, end - pos);
        const auto it = std::find(words.begin(), words.end(), word);
        if (it == words.end()) throw ContractError("tokenize: unknown word '" + word + "'");
        out.push_back(static_cast<TokenId>(it - words.begin()));
      }
      pos = end;
    }
    return out;
  }

  std::string render(std::span<const TokenId> tokens) const {
    std::string out;
    for (TokenId t : tokens) {
      if (is_special(t) || t < 0 || t >= size) continue;
      const std::string& w = words[t];
      if (w.empty()) continue;
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  }
};

// Greedy decode output. token_ids holds the generated content tokens, without
// the bos prelude and without the terminating eos.
struct TranscriptionResult {
  std::vector<TokenId> token_ids;
  std::string text;
  bool hit_cap = false;
  bool ended_with_eos = false;

  bool empty_transcription() const { return token_ids.empty() && ended_with_eos; }
  std::size_t length() const { return token_ids.size(); }
};

// A loss that is a linear combination of selected token log-probabilities:
//   loss = sum_j coeff_j * logprob(token_j | audio, prefix_j)
// This covers both suppression objectives and is what models differentiate.
struct LogProbTerm {
  std::vector<TokenId> prefix;
  TokenId token = -1;
  double coeff = 1.0;
};
using LogProbLoss = std::vector<LogProbTerm>;

class VictimModel {
public:
  virtual ~VictimModel() = default;

  virtual std::string identity() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual bool differentiable() const { return false; }

  // Log-probabilities over the full vocabulary for the next token; exp of the
  // returned vector sums to 1. `prefix` must begin with bos_sequence.
  virtual std::vector<double> next_token_logprobs(const audio::Waveform& x,
                                                  std::span<const TokenId> prefix) const = 0;

  // d(loss)/d(sample) for every sample of x.
  virtual std::vector<double> input_gradient(const audio::Waveform& x,
                                             const LogProbLoss& loss) const {
    (void)x;
    (void)loss;
    throw CapabilityError("input_gradient: model '" + identity() + "' is not differentiable");
  }
};

inline void check_prefix(const Vocabulary& vocab, std::span<const TokenId> prefix) {
  if (prefix.size() < vocab.bos_sequence.size() ||
      !std::equal(vocab.bos_sequence.begin(), vocab.bos_sequence.end(), prefix.begin())) {
    throw ContractError("prefix must begin with the bos sequence");
  }
}

inline double eval_logprob_loss(const VictimModel& m, const audio::Waveform& x,
                                const LogProbLoss& loss) {
  double total = 0.0;
  for (const LogProbTerm& term : loss) {
    const auto lp = m.next_token_logprobs(x, term.prefix);
    total += term.coeff * lp[term.token];
  }
  return total;
}

inline TranscriptionResult transcribe(const VictimModel& m, const audio::Waveform& x,
                                      int max_tokens = kDefaultMaxTokens) {
  if (max_tokens < 1) throw ContractError("transcribe: max_tokens must be >= 1");
  const Vocabulary& vocab = m.vocabulary();
  TranscriptionResult result;
  std::vector<TokenId> prefix = vocab.bos_sequence;
  for (int step = 0; step < max_tokens; ++step) {
    const auto lp = m.next_token_logprobs(x, prefix);
    const TokenId next = static_cast<TokenId>(
        std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (next == vocab.eos_id) {
      result.ended_with_eos = true;
      break;
    }
    result.token_ids.push_back(next);
    prefix.push_back(next);
  }
  result.hit_cap = !result.ended_with_eos;
  result.text = vocab.render(result.token_ids);
  return result;
}

// Maps identity strings like "toy:42" to constructed models. Schemes are
// registered by the embedding application; adapters for external models hook
// in the same way.
class ModelRegistry {
public:
  using Factory = std::function<std::shared_ptr<VictimModel>(const std::string& spec)>;

  void register_scheme(const std::string& scheme, Factory factory) {
    factories_[scheme] = std::move(factory);
  }

  std::shared_ptr<VictimModel> create(const std::string& identity) const {
    const auto colon = identity.find(':');
    const std::string scheme = identity.substr(0, colon);
    const std::string spec = (colon == std::string::npos) ? "" : identity.substr(colon + 1);
    const auto it = factories_.find(scheme);
    if (it == factories_.end()) {
      throw ConfigError("unknown model scheme: '" + scheme + "'");
    }
    return it->second(spec);
  }

private:
  std::map<std::string, Factory> factories_;
};

}  // namespace eosmute::model
