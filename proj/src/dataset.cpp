#include "enginefault/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "enginefault/errors.hpp"

namespace enginefault {

namespace {

std::vector<char> read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(size);
  if (size > 0) in.read(buf.data(), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read on " + path.string());
  return buf;
}

}  // namespace

LabeledWindowSet load_window_store(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }

  LabeledWindowSet set;
  try {
    set.window_len = man.at("window_len").get<int>();
    set.channels = man.at("channels").get<int>();
    const auto windows = man.at("windows").get<std::size_t>();
    for (const auto& r : man.at("runs")) {
      RunSpan span;
      span.id = r.at("id").get<std::string>();
      span.fault_id = r.at("fault_id").get<int>();
      span.first = r.at("first_window").get<std::size_t>();
      span.count = r.at("windows").get<std::size_t>();
      set.runs.push_back(std::move(span));
    }
    if (set.window_len <= 0 || set.channels <= 0)
      throw IoError("manifest has non-positive window_len or channels");

    std::size_t covered = 0;
    for (const auto& span : set.runs) {
      if (span.first != covered)
        throw IoError("manifest run spans are not contiguous at " + span.id);
      covered += span.count;
    }
    if (covered != windows)
      throw IoError("manifest run spans cover " + std::to_string(covered) + " windows, expected " +
                    std::to_string(windows));

    const auto fbytes = read_binary(dir / "features.bin");
    const std::size_t want_f =
        windows * static_cast<std::size_t>(set.window_len) * static_cast<std::size_t>(set.channels) * 4;
    if (fbytes.size() != want_f)
      throw IoError("features.bin is " + std::to_string(fbytes.size()) + " bytes, expected " +
                    std::to_string(want_f));
    set.features.resize(want_f / 4);
    std::memcpy(set.features.data(), fbytes.data(), fbytes.size());

    const auto lbytes = read_binary(dir / "labels.bin");
    const std::size_t want_l = windows * static_cast<std::size_t>(set.window_len);
    if (lbytes.size() != want_l)
      throw IoError("labels.bin is " + std::to_string(lbytes.size()) + " bytes, expected " +
                    std::to_string(want_l));
    set.step_labels.resize(want_l);
    std::memcpy(set.step_labels.data(), lbytes.data(), lbytes.size());

    set.labels.resize(windows);
    for (std::size_t i = 0; i < windows; ++i)
      set.labels[i] = set.step_labels[(i + 1) * static_cast<std::size_t>(set.window_len) - 1];
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest " + manifest_path.string() + ": " + e.what());
  }
  return set;
}

Sample get_sample(const LabeledWindowSet& set, std::size_t idx) {
  if (idx >= set.count())
    throw IndexError("sample index " + std::to_string(idx) + " out of range for " +
                     std::to_string(set.count()) + " windows");
  const std::size_t cells = static_cast<std::size_t>(set.window_len) * set.channels;
  Sample s;
  s.window.resize(cells);
  const float* src = set.features.data() + idx * cells;
  for (std::size_t i = 0; i < cells; ++i) s.window[i] = static_cast<double>(src[i]);
  s.step_targets.resize(set.window_len);
  const std::uint8_t* lab = set.step_labels.data() + idx * static_cast<std::size_t>(set.window_len);
  for (int i = 0; i < set.window_len; ++i) s.step_targets[i] = lab[i];
  s.label = set.labels[idx];
  return s;
}

namespace {

// Largest-remainder apportionment of n runs into three parts. Guarantees
// each part gets at least one run when n >= 3.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& r) {
  const double quota[3] = {r.train * n, r.val * n, r.test * n};
  std::array<std::size_t, 3> out{};
  double frac[3];
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    out[i] = static_cast<std::size_t>(std::floor(quota[i]));
    frac[i] = quota[i] - static_cast<double>(out[i]);
    used += out[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a < b;
  });
  for (std::size_t k = 0; used < n; ++k) {
    out[order[k % 3]] += 1;
    ++used;
  }
  for (int i = 0; i < 3; ++i) {
    if (out[i] > 0) continue;
    // steal from the largest part
    int big = 0;
    for (int j = 1; j < 3; ++j)
      if (out[j] > out[big]) big = j;
    if (out[big] <= 1) throw Error("cannot give every split part a run from " + std::to_string(n));
    out[big] -= 1;
    out[i] += 1;
  }
  return out;
}

void shuffle_indices(std::vector<std::size_t>& v, RngState& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(v[i - 1], v[j]);
  }
}

void append_run_windows(const LabeledWindowSet& set, std::size_t run_idx,
                        std::vector<std::size_t>& windows, std::vector<std::string>& runs) {
  const auto& span = set.runs[run_idx];
  runs.push_back(span.id);
  for (std::size_t w = 0; w < span.count; ++w) windows.push_back(span.first + w);
}

}  // namespace

Split split_dataset(const LabeledWindowSet& set, const SplitRatios& ratios, std::uint64_t seed) {
  if (!(ratios.train > 0.0) || !(ratios.val > 0.0) || !(ratios.test > 0.0))
    throw InvalidArgumentError("split ratios must all be positive");
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgumentError("split ratios sum to " + std::to_string(sum) + ", expected 1");
  if (set.runs.empty()) throw InvalidArgumentError("cannot split an empty window store");

  std::map<int, std::vector<std::size_t>> by_class;  // fault_id -> run indices
  for (std::size_t i = 0; i < set.runs.size(); ++i) by_class[set.runs[i].fault_id].push_back(i);

  Split split;
  split.ratios = ratios;
  split.seed = seed;

  RngState rng = RngState(seed).fork(0x5117);
  for (auto& [cls, run_ids] : by_class) {
    if (run_ids.size() < 3)
      throw Error("class " + std::to_string(cls) + " has only " + std::to_string(run_ids.size()) +
                  " runs; at least 3 are needed to fill train/val/test");
    RngState class_rng = rng.fork(static_cast<std::uint64_t>(cls));
    shuffle_indices(run_ids, class_rng);
    const auto counts = apportion(run_ids.size(), ratios);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < counts[0]; ++k)
      append_run_windows(set, run_ids[pos++], split.train, split.train_runs);
    for (std::size_t k = 0; k < counts[1]; ++k)
      append_run_windows(set, run_ids[pos++], split.val, split.val_runs);
    for (std::size_t k = 0; k < counts[2]; ++k)
      append_run_windows(set, run_ids[pos++], split.test, split.test_runs);
  }

  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train_runs.begin(), split.train_runs.end());
  std::sort(split.val_runs.begin(), split.val_runs.end());
  std::sort(split.test_runs.begin(), split.test_runs.end());
  return split;
}

void save_split(const Split& split, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["ratios"] = {{"train", split.ratios.train}, {"val", split.ratios.val}, {"test", split.ratios.test}};
  j["train_runs"] = split.train_runs;
  j["val_runs"] = split.val_runs;
  j["test_runs"] = split.test_runs;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out.good()) throw IoError("failed writing " + path.string());
}

Split load_split(const LabeledWindowSet& set, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid split file " + path.string() + ": " + e.what());
  }

  Split split;
  try {
    split.seed = j.at("seed").get<std::uint64_t>();
    split.ratios.train = j.at("ratios").at("train").get<double>();
    split.ratios.val = j.at("ratios").at("val").get<double>();
    split.ratios.test = j.at("ratios").at("test").get<double>();
    split.train_runs = j.at("train_runs").get<std::vector<std::string>>();
    split.val_runs = j.at("val_runs").get<std::vector<std::string>>();
    split.test_runs = j.at("test_runs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("split file " + path.string() + ": " + e.what());
  }

  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < set.runs.size(); ++i) by_id[set.runs[i].id] = i;
  auto fill = [&](const std::vector<std::string>& runs, std::vector<std::size_t>& windows) {
    std::vector<std::string> dummy;
    for (const auto& id : runs) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error("split file names run " + id + " absent from the store");
      append_run_windows(set, it->second, windows, dummy);
    }
    std::sort(windows.begin(), windows.end());
  };
  fill(split.train_runs, split.train);
  fill(split.val_runs, split.val);
  fill(split.test_runs, split.test);

  std::vector<std::string> all;
  for (const auto* part : {&split.train_runs, &split.val_runs, &split.test_runs})
    all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end())
    throw Error("split file assigns some run to more than one part");
  return split;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& part,
                                                   std::size_t batch_size, bool shuffle,
                                                   RngState& rng) {
  if (batch_size == 0) throw InvalidArgumentError("batch_size must be positive");
  std::vector<std::size_t> order(part.begin(), part.end());
  if (shuffle) {
    shuffle_indices(order, rng);
  } else {
    std::sort(order.begin(), order.end());
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t pos = 0; pos < order.size(); pos += batch_size) {
    const std::size_t end = std::min(pos + batch_size, order.size());
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch gather_batch(const LabeledWindowSet& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidArgumentError("cannot gather an empty batch");
  const std::size_t w = static_cast<std::size_t>(set.window_len);
  const std::size_t c = static_cast<std::size_t>(set.channels);
  Batch batch;
  batch.x = nn::Tensor::zeros({static_cast<int>(indices.size()), set.window_len, set.channels});
  auto& vals = batch.x.values();
  batch.step_targets.reserve(indices.size() * w);
  batch.window_targets.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t idx = indices[b];
    if (idx >= set.count())
      throw IndexError("batch index " + std::to_string(idx) + " out of range");
    const float* src = set.features.data() + idx * w * c;
    double* dst = vals.data() + b * w * c;
    for (std::size_t i = 0; i < w * c; ++i) dst[i] = static_cast<double>(src[i]);
    const std::uint8_t* lab = set.step_labels.data() + idx * w;
    for (std::size_t i = 0; i < w; ++i) batch.step_targets.push_back(lab[i]);
    batch.window_targets.push_back(set.labels[idx]);
  }
  return batch;
}

}  // namespace enginefault
