#pragma once

#include <filesystem>
#include <string>

#include "enginefault/config.hpp"
#include "enginefault/preprocess.hpp"
#include "enginefault/testbed.hpp"
#include "enginefault/train_eval.hpp"

namespace enginefault {

// Stage drivers shared by the command-line tool and the end-to-end tests.
// Each one maps a validated RunConfig onto the corresponding module call.

CorpusSummary run_generate(const RunConfig& cfg);
PreprocessReport run_preprocess(const RunConfig& cfg);

// Loads the store, makes (and saves) the run-level split, trains the model
// named by cfg.model.kind, and leaves metrics.csv, checkpoint_best/,
// report.json, split.json and the resolved config.json in cfg.run_dir.
FitReport run_train(const RunConfig& cfg);

// Scores an existing checkpoint on one split part and writes a report.
EvalMetrics run_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint_dir,
                         const std::filesystem::path& split_file, const std::string& part,
                         const std::filesystem::path& report_out);

struct PredictOutcome {
  int verdict = 0;
  PredictionTrace trace;
  LatencyResult latency;   // meaningful when has_fault
  bool has_fault = false;
  int fault_id = 0;
  std::size_t onset_step = 0;
};

// Runs the causal per-step monitor over one raw run directory; writes the
// trace as CSV when trace_out is non-empty.
PredictOutcome run_predict(const RunConfig& cfg, const std::filesystem::path& checkpoint_dir,
                           const std::filesystem::path& run_dir,
                           const std::filesystem::path& trace_out);

// Reshapes metrics.csv into a long-format curves file (series,epoch,value).
void run_report(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_csv);

}  // namespace enginefault
