#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "enginefault/models.hpp"

namespace enginefault {

// Every knob of the pipeline in one place. JSON layout mirrors the nesting
// here; all fields are optional and default as below, unknown keys are
// rejected with their full path.
struct RunConfig {
  // corpus generation
  std::string corpus_dir = "corpus";
  int runs_per_class = 40;
  int duration_s = 300;
  double noise_amp = 0.02;
  double missing_rate = 0.0;
  int threads = 0;  // 0: ENGINEFAULT_THREADS env or 1
  std::uint64_t corpus_seed = 1;

  // windowing
  std::string store_dir = "store";
  int frame_len = 300;
  int window_len = 64;
  int stride = 32;

  // split
  SplitRatios ratios;
  std::uint64_t split_seed = 2;

  // model and training
  ModelSpec model;
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  bool deterministic_timing = false;
  int persistence = 3;
  std::uint64_t init_seed = 3;
  std::uint64_t shuffle_seed = 4;
  std::uint64_t dropout_seed = 5;

  std::string run_dir = "runs/default";
};

// Parses and validates; every violation is reported as
// "config.<path.to.field>: <reason>" in a ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

// One master seed fans out to every stage seed, so a single --seed flag
// reproduces the whole pipeline.
void apply_master_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace enginefault
