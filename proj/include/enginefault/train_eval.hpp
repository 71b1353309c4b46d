#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "enginefault/checkpoint.hpp"
#include "enginefault/dataset.hpp"
#include "enginefault/models.hpp"
#include "enginefault/optim.hpp"

namespace enginefault {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  nn::AdamConfig adam;
  std::uint64_t shuffle_seed = 4;
  std::uint64_t dropout_seed = 5;
  // Writes 0 into the seconds column so repeated runs produce byte-identical
  // metrics files.
  bool deterministic_timing = false;
  int persistence = 3;  // detector bar for the latency report
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;
  double seconds = 0;
};

struct EvalMetrics {
  double loss = 0;
  double step_accuracy = 0;    // argmax vs per-step target
  double window_accuracy = 0;  // last-step verdict vs window label
  std::size_t windows = 0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
};

// One pass over `part` in shuffled batches: per-step cross entropy, backward,
// Adam. Returns (mean loss, step accuracy). A non-finite loss aborts with the
// batch index and gradient norms in the message.
std::pair<double, double> train_epoch(SequenceClassifier& model, const LabeledWindowSet& set,
                                      const Normalizer& norm, const std::vector<std::size_t>& part,
                                      const TrainConfig& cfg, RngState& shuffle_rng,
                                      RngState& dropout_rng);

// Pure function of (parameters, data): no dropout, no gradients, no state.
EvalMetrics evaluate(SequenceClassifier& model, const LabeledWindowSet& set, const Normalizer& norm,
                     const std::vector<std::size_t>& part, int batch_size);

struct LatencySummary {
  int persistence = 3;
  std::size_t evaluated = 0, detected = 0, not_detected = 0, false_early = 0;
  double median_steps = 0, mean_steps = 0;
  std::vector<std::int64_t> latencies;  // detected runs only, sorted
};

struct FitReport {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;  // 1-based epoch whose checkpoint was kept
  EvalMetrics test;
  std::optional<LatencySummary> latency;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path metrics_path;
};

struct FitOptions {
  std::filesystem::path run_dir;
  // When set, fault runs of the test split are re-read from this corpus and
  // scored for causal detection latency.
  std::optional<std::filesystem::path> corpus_dir;
  int frame_len = 300;
};

// Full loop: streams metrics.csv one row per epoch, keeps the checkpoint of
// the best validation epoch, then evaluates the test split through the
// reloaded checkpoint and writes report.json.
FitReport fit(SequenceClassifier& model, const LabeledWindowSet& set, const Split& split,
              const TrainConfig& cfg, const FitOptions& opts);

void write_report_json(const FitReport& report, const std::string& model_kind,
                       const std::filesystem::path& path);

}  // namespace enginefault
