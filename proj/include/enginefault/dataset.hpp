#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "enginefault/rng.hpp"
#include "enginefault/series.hpp"
#include "enginefault/tensor.hpp"

namespace enginefault {

// The window store loaded into memory. Windows from one run occupy a
// contiguous index span, which is what makes run-level splitting possible.
struct RunSpan {
  std::string id;  // "<fault_id>/run_NNNN"
  int fault_id = 0;
  std::size_t first = 0;
  std::size_t count = 0;
};

struct LabeledWindowSet {
  int window_len = 0;
  int channels = 0;
  std::vector<float> features;             // N * window_len * channels
  std::vector<std::uint8_t> step_labels;   // N * window_len
  std::vector<std::uint8_t> labels;        // N, last-step label per window
  std::vector<RunSpan> runs;

  std::size_t count() const { return labels.size(); }
};

LabeledWindowSet load_window_store(const std::filesystem::path& dir);

struct Sample {
  std::vector<double> window;     // window_len * channels
  int label = 0;
  std::vector<int> step_targets;  // window_len
};

Sample get_sample(const LabeledWindowSet& set, std::size_t idx);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct Split {
  std::vector<std::size_t> train, val, test;  // window indices, ascending
  std::vector<std::string> train_runs, val_runs, test_runs;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

// Stratified by class at run granularity: overlapping windows of one run
// never straddle split parts. Classes present with fewer than 3 runs cannot
// fill three parts and raise an error.
Split split_dataset(const LabeledWindowSet& set, const SplitRatios& ratios, std::uint64_t seed);

void save_split(const Split& split, const std::filesystem::path& path);
Split load_split(const LabeledWindowSet& set, const std::filesystem::path& path);

// Index batches over one split part: every index exactly once, last batch
// may be short. shuffle=false enumerates ascending.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& part,
                                                   std::size_t batch_size, bool shuffle,
                                                   RngState& rng);

struct Batch {
  nn::Tensor x;                   // (B, window_len, channels), no grad
  std::vector<int> step_targets;  // B * window_len
  std::vector<int> window_targets;  // B
};

Batch gather_batch(const LabeledWindowSet& set, const std::vector<std::size_t>& indices);

}  // namespace enginefault
