#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "enginefault/models.hpp"

namespace enginefault {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  Normalizer normalizer;
  std::unique_ptr<SequenceClassifier> model;
};

// A checkpoint is a directory holding manifest.json (format version, model
// kind, per-parameter name/shape/offset), params.bin (all parameter values as
// float32, little-endian, in manifest order) and config.json (model config
// plus normalization stats). Loading rebuilds the model and verifies every
// name, shape and byte count; any mismatch raises CorruptCheckpointError.
void save_checkpoint(SequenceClassifier& model, const Normalizer& norm,
                     const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace enginefault
