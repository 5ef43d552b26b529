#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "eosmute/harness.hpp"
#include "eosmute/toy_data.hpp"
#include "eosmute/toy_model.hpp"

namespace eosmute::model::toy {

inline std::string manifest_hash(const harness::DatasetManifest& manifest) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : manifest.entries) j.push_back({e.audio, e.text, e.split});
  const std::string dump = j.dump();
  return harness::detail::fnv1a_hex(dump.data(), dump.size());
}

// Returns the toy model for `seed`, pretrained on the manifest's train split.
// Checkpoints are cached per (seed, corpus) so repeated invocations reuse the
// same fitted parameters bit for bit.
inline std::shared_ptr<ToyModel> pretrained_toy_model(std::uint64_t seed,
                                                      const harness::DatasetManifest& manifest,
                                                      int vocab_size = 16) {
  const auto ckpt = harness::cache_dir() /
                    ("toy_" + std::to_string(seed) + "_" + manifest_hash(manifest) + ".ckpt");
  if (std::filesystem::exists(ckpt)) return load_checkpoint(ckpt);
  auto model = make_toy_model(seed, vocab_size);
  std::vector<LabeledUtterance> data;
  for (const auto& ex : harness::load_split(manifest, "train")) {
    data.push_back({ex.audio, model->vocabulary().tokenize(ex.text)});
  }
  pretrain(*model, data);
  std::filesystem::create_directories(ckpt.parent_path());
  save_checkpoint(*model, ckpt);
  return model;
}

// Resolver for identities like "toy:42"; plugs toy models into the harness.
// External adapters register additional schemes on a ModelRegistry instead.
inline harness::ModelResolver make_toy_resolver(const harness::DatasetManifest& manifest,
                                                int vocab_size = 16) {
  return [manifest, vocab_size](const std::string& identity)
             -> std::shared_ptr<model::VictimModel> {
    const std::string prefix = "toy:";
    if (identity.rfind(prefix, 0) != 0) {
      throw ConfigError("unknown model identity: '" + identity + "' (expected toy:<seed>)");
    }
    const std::uint64_t seed = std::stoull(identity.substr(prefix.size()));
    return pretrained_toy_model(seed, manifest, vocab_size);
  };
}

}  // namespace eosmute::model::toy
