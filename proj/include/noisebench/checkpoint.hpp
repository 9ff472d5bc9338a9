#pragma once

#include <filesystem>

#include "noisebench/dataset.hpp"
#include "noisebench/featurizer.hpp"
#include "noisebench/model.hpp"

namespace noisebench {

/// Everything needed to score new text: featurizer config, label names and weights.
struct Checkpoint {
  Featurizer featurizer;
  LabelSet labels;
  ModelParams params;
};

/// `.json` paths get the JSON container (doubles written in shortest
/// round-trip form, so reloading is bit-exact); any other extension gets the
/// binary container.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace noisebench
