#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "enginefault/series.hpp"

namespace enginefault {

// One run as read back from disk; table lengths may differ across tables.
struct RawRun {
  Table omega, torque, input_signal, output_signal, states_signal;
  int fault_id = 0;
  double onset_s = 0.0;  // meaningful only when fault_id > 0
  std::uint64_t seed = 0;
  std::string source;  // path, for error messages
};

RawRun read_raw_run(const std::filesystem::path& dir);

// Uniform-grid merge of the run's multichannel tables: T rows x 27 columns
// in the fixed order [input 0-4, output 0-8, state 0-12], plus a
// per-timestep fault label. The 1 Hz omega/torque traces stay outside the
// feature matrix; their quantities already appear among the actuator and
// sensor channels.
struct MergedFrame {
  std::vector<double> times;
  std::vector<double> values;  // row-major, T x 27
  std::vector<std::uint8_t> labels;
  std::vector<std::string> names;

  std::size_t rows() const { return times.size(); }
};

// Gap repair: interior NaNs by linear interpolation, edge NaNs by nearest
// finite value. `context` names the run/column in the all-NaN error.
std::vector<double> fix_missing(const std::vector<double>& v, const std::string& context);

// Linear interpolation of (times, values) onto target_times; exact sample
// hits return the stored value bitwise, out-of-range targets clamp.
std::vector<double> resample_linear(const std::vector<double>& times,
                                    const std::vector<double>& values,
                                    const std::vector<double>& target_times);

MergedFrame merge_run(const RawRun& raw, int T);

struct WindowOrigin {
  std::string run;     // "<fault_id>/run_NNNN"
  std::int64_t start;  // first row index in the merged frame
};

struct WindowSet {
  int window_len = 0;
  int stride = 0;
  std::vector<double> windows;              // N * window_len * 27
  std::vector<std::uint8_t> window_labels;  // N, label of each window's last row
  std::vector<std::uint8_t> step_labels;    // N * window_len, per-row labels
  std::vector<WindowOrigin> origins;

  std::size_t count() const { return window_labels.size(); }
};

WindowSet sliding_window(const MergedFrame& frame, int w, int s,
                         const std::string& run_id = "");

struct PreprocessConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  int frame_len = 300;  // T
  int window_len = 64;  // w
  int stride = 32;      // s
};

struct PreprocessReport {
  int runs_total = 0;
  int runs_ok = 0;
  int runs_skipped = 0;
  std::size_t windows = 0;
  std::array<std::size_t, kNumClasses> class_windows{};
};

// Walks <corpus>/<fault_id>/run_*/, merges and windows every run in sorted
// order, and writes features.bin (float32 LE), labels.bin (per-step uint8)
// and manifest.json into out_dir. Malformed runs are skipped with a warning;
// more than 10% skipped fails the whole pass.
PreprocessReport preprocess_corpus(const PreprocessConfig& cfg);

}  // namespace enginefault
