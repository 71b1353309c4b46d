#include "enginefault/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "enginefault/csv_io.hpp"
#include "enginefault/errors.hpp"

namespace fs = std::filesystem;

namespace enginefault {

namespace {

void require_table(const Table& t, int channels, const std::string& what,
                   const std::string& source) {
  if (t.channels != channels)
    throw InvalidArgumentError(source + "/" + what + ": expected " + std::to_string(channels) +
                               " channels, found " + std::to_string(t.channels));
  if (t.rows() < 2)
    throw InvalidArgumentError(source + "/" + what + ": fewer than 2 rows");
  for (std::size_t i = 1; i < t.rows(); ++i)
    if (!(t.times[i] > t.times[i - 1]))
      throw InvalidArgumentError(source + "/" + what + ": timestamps not strictly increasing at row " +
                                 std::to_string(i));
}

}  // namespace

RawRun read_raw_run(const fs::path& dir) {
  RawRun raw;
  raw.source = dir.string();
  raw.omega = read_table_csv(dir / "omega.csv");
  raw.torque = read_table_csv(dir / "torque.csv");
  raw.input_signal = read_table_csv(dir / "input_signal.csv");
  raw.output_signal = read_table_csv(dir / "output_signal.csv");
  raw.states_signal = read_table_csv(dir / "states_signal.csv");

  require_table(raw.omega, 1, "omega.csv", raw.source);
  require_table(raw.torque, 1, "torque.csv", raw.source);
  require_table(raw.input_signal, kInputChannels, "input_signal.csv", raw.source);
  require_table(raw.output_signal, kOutputChannels, "output_signal.csv", raw.source);
  require_table(raw.states_signal, kStateChannels, "states_signal.csv", raw.source);

  const fs::path meta_path = dir / "meta.json";
  std::ifstream in(meta_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const std::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  if (!meta.contains("fault_id") || !meta["fault_id"].is_number_integer())
    throw InvalidArgumentError(meta_path.string() + ": missing integer fault_id");
  raw.fault_id = meta["fault_id"].get<int>();
  if (raw.fault_id < 0 || raw.fault_id >= kNumClasses)
    throw InvalidArgumentError(meta_path.string() + ": fault_id " +
                               std::to_string(raw.fault_id) + " out of range");
  if (raw.fault_id > 0) {
    if (!meta.contains("onset_s"))
      throw InvalidArgumentError(meta_path.string() + ": faulty run missing onset_s");
    raw.onset_s = meta["onset_s"].get<double>();
  }
  if (meta.contains("seed")) raw.seed = meta["seed"].get<std::uint64_t>();
  return raw;
}

std::vector<double> fix_missing(const std::vector<double>& v, const std::string& context) {
  std::vector<double> out = v;
  const std::size_t n = out.size();
  std::size_t first = n, last = n;
  for (std::size_t i = 0; i < n; ++i)
    if (std::isfinite(out[i])) {
      if (first == n) first = i;
      last = i;
    }
  if (first == n)
    throw UnrecoverableColumnError("no finite values in " +
                                   (context.empty() ? std::string("column") : context));

  for (std::size_t i = 0; i < first; ++i) out[i] = out[first];
  for (std::size_t i = last + 1; i < n; ++i) out[i] = out[last];
  std::size_t i = first;
  while (i < last) {
    if (std::isfinite(out[i + 1])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (!std::isfinite(out[j])) ++j;  // j <= last, which is finite
    const double lo = out[i], hi = out[j];
    for (std::size_t k = i + 1; k < j; ++k)
      out[k] = lo + (hi - lo) * static_cast<double>(k - i) / static_cast<double>(j - i);
    i = j;
  }
  return out;
}

std::vector<double> resample_linear(const std::vector<double>& times,
                                    const std::vector<double>& values,
                                    const std::vector<double>& target_times) {
  if (times.size() < 2)
    throw InvalidArgumentError("resample needs at least 2 source points, got " +
                               std::to_string(times.size()));
  if (times.size() != values.size())
    throw InvalidArgumentError("resample: times/values length mismatch");

  std::vector<double> out(target_times.size());
  for (std::size_t i = 0; i < target_times.size(); ++i) {
    const double t = target_times[i];
    if (t <= times.front()) {
      out[i] = values.front();
      continue;
    }
    if (t >= times.back()) {
      out[i] = values.back();
      continue;
    }
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    const auto hi = static_cast<std::size_t>(it - times.begin());
    if (times[hi] == t) {
      out[i] = values[hi];  // exact hit stays bitwise identical
      continue;
    }
    const std::size_t lo = hi - 1;
    const double a = (t - times[lo]) / (times[hi] - times[lo]);
    out[i] = values[lo] + (values[hi] - values[lo]) * a;
  }
  return out;
}

MergedFrame merge_run(const RawRun& raw, int T) {
  if (T < 2) throw InvalidArgumentError("merge target length must be >= 2, got " + std::to_string(T));
  // The feature frame merges the three multichannel tables (5+9+13 = 27
  // columns). The 1 Hz omega/torque traces are part of the run schema but
  // duplicate quantities already present among the actuator/sensor channels.
  const Table* tables[] = {&raw.input_signal, &raw.output_signal, &raw.states_signal};

  double t0 = std::numeric_limits<double>::infinity();
  double t1 = -std::numeric_limits<double>::infinity();
  for (const Table* t : tables) {
    if (t->rows() < 2) throw InvalidArgumentError(raw.source + ": table with fewer than 2 rows");
    t0 = std::min(t0, t->times.front());
    t1 = std::max(t1, t->times.back());
  }
  if (!(t1 > t0)) throw InvalidArgumentError(raw.source + ": degenerate time span");

  MergedFrame frame;
  frame.times.resize(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i)
    frame.times[static_cast<std::size_t>(i)] =
        t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(T - 1);

  frame.values.assign(static_cast<std::size_t>(T) * kMergedChannels, 0.0);
  int col = 0;
  for (const Table* t : tables) {
    for (int ch = 0; ch < t->channels; ++ch) {
      const std::string context =
          raw.source + ": " + (ch < static_cast<int>(t->names.size())
                                   ? t->names[static_cast<std::size_t>(ch)]
                                   : "column " + std::to_string(ch));
      const std::vector<double> repaired = fix_missing(t->column(ch), context);
      const std::vector<double> res = resample_linear(t->times, repaired, frame.times);
      for (int r = 0; r < T; ++r)
        frame.values[static_cast<std::size_t>(r) * kMergedChannels + col] =
            res[static_cast<std::size_t>(r)];
      frame.names.push_back(ch < static_cast<int>(t->names.size())
                                ? t->names[static_cast<std::size_t>(ch)]
                                : "col" + std::to_string(col));
      ++col;
    }
  }
  if (col != kMergedChannels)
    throw InvalidArgumentError(raw.source + ": merged to " + std::to_string(col) +
                               " columns, expected " + std::to_string(kMergedChannels));

  frame.labels.assign(static_cast<std::size_t>(T), 0);
  if (raw.fault_id > 0)
    for (int r = 0; r < T; ++r)
      if (frame.times[static_cast<std::size_t>(r)] >= raw.onset_s)
        frame.labels[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(raw.fault_id);
  return frame;
}

WindowSet sliding_window(const MergedFrame& frame, int w, int s, const std::string& run_id) {
  const auto T = static_cast<int>(frame.rows());
  if (w < 1 || w > T)
    throw InvalidArgumentError("window length " + std::to_string(w) +
                               " invalid for frame of " + std::to_string(T) + " rows");
  if (s < 1 || s > w)
    throw InvalidArgumentError("stride " + std::to_string(s) + " must be in [1, window length]");

  WindowSet set;
  set.window_len = w;
  set.stride = s;
  const int n = (T - w) / s + 1;
  set.windows.reserve(static_cast<std::size_t>(n) * w * kMergedChannels);
  set.window_labels.reserve(static_cast<std::size_t>(n));
  set.step_labels.reserve(static_cast<std::size_t>(n) * w);
  for (int i = 0; i < n; ++i) {
    const int start = i * s;
    const auto* row0 = frame.values.data() + static_cast<std::size_t>(start) * kMergedChannels;
    set.windows.insert(set.windows.end(), row0,
                       row0 + static_cast<std::size_t>(w) * kMergedChannels);
    set.step_labels.insert(set.step_labels.end(), frame.labels.begin() + start,
                           frame.labels.begin() + start + w);
    set.window_labels.push_back(frame.labels[static_cast<std::size_t>(start + w - 1)]);
    set.origins.push_back({run_id, start});
  }
  return set;
}

PreprocessReport preprocess_corpus(const PreprocessConfig& cfg) {
  if (!fs::exists(cfg.corpus_dir))
    throw IoError("corpus directory not found: " + cfg.corpus_dir.string());

  // Deterministic (class, run) order regardless of directory iteration order.
  std::vector<std::pair<int, fs::path>> runs;
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(cfg.corpus_dir))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  for (const auto& cls_dir : class_dirs) {
    int cls;
    try {
      std::size_t pos = 0;
      cls = std::stoi(cls_dir.filename().string(), &pos);
      if (pos != cls_dir.filename().string().size()) continue;
    } catch (...) {
      continue;
    }
    if (cls < 0 || cls >= kNumClasses) continue;
    std::vector<fs::path> run_dirs;
    for (const auto& entry : fs::directory_iterator(cls_dir))
      if (entry.is_directory()) run_dirs.push_back(entry.path());
    std::sort(run_dirs.begin(), run_dirs.end());
    for (const auto& r : run_dirs) runs.emplace_back(cls, r);
  }

  PreprocessReport report;
  report.runs_total = static_cast<int>(runs.size());

  std::vector<float> features;
  std::vector<std::uint8_t> step_labels;
  nlohmann::ordered_json run_index = nlohmann::ordered_json::array();
  std::vector<std::string> columns;
  std::size_t window_cursor = 0;

  for (const auto& [cls, dir] : runs) {
    const std::string run_id =
        std::to_string(cls) + "/" + dir.filename().string();
    try {
      const RawRun raw = read_raw_run(dir);
      if (raw.fault_id != cls)
        throw InvalidArgumentError(run_id + ": meta fault_id " + std::to_string(raw.fault_id) +
                                   " does not match class folder");
      const MergedFrame frame = merge_run(raw, cfg.frame_len);
      if (columns.empty())
        columns = frame.names;
      else if (columns != frame.names)
        throw InvalidArgumentError(run_id + ": column headers differ from the first run");
      const WindowSet set = sliding_window(frame, cfg.window_len, cfg.stride, run_id);

      features.reserve(features.size() + set.windows.size());
      for (double v : set.windows) features.push_back(static_cast<float>(v));
      step_labels.insert(step_labels.end(), set.step_labels.begin(), set.step_labels.end());

      nlohmann::ordered_json entry;
      entry["id"] = run_id;
      entry["fault_id"] = cls;
      entry["first_window"] = window_cursor;
      entry["windows"] = set.count();
      run_index.push_back(entry);
      window_cursor += set.count();
      report.class_windows[static_cast<std::size_t>(cls)] += set.count();
      ++report.runs_ok;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: skipping %s: %s\n", run_id.c_str(), e.what());
      ++report.runs_skipped;
    }
  }

  if (report.runs_total > 0 &&
      report.runs_skipped * 10 > report.runs_total)
    throw Error("preprocessing skipped " + std::to_string(report.runs_skipped) + " of " +
                std::to_string(report.runs_total) + " runs (over 10%)");

  report.windows = window_cursor;

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(cfg.out_dir / "features.bin", std::ios::binary);
    if (!features.empty())
      f.write(reinterpret_cast<const char*>(features.data()),
              static_cast<std::streamsize>(features.size() * sizeof(float)));
    if (!f) throw IoError("failed writing " + (cfg.out_dir / "features.bin").string());
  }
  {
    std::ofstream f(cfg.out_dir / "labels.bin", std::ios::binary);
    if (!step_labels.empty())
      f.write(reinterpret_cast<const char*>(step_labels.data()),
              static_cast<std::streamsize>(step_labels.size()));
    if (!f) throw IoError("failed writing " + (cfg.out_dir / "labels.bin").string());
  }
  {
    nlohmann::ordered_json manifest;
    manifest["windows"] = window_cursor;
    manifest["window_len"] = cfg.window_len;
    manifest["stride"] = cfg.stride;
    manifest["frame_len"] = cfg.frame_len;
    manifest["channels"] = kMergedChannels;
    manifest["classes"] = kNumClasses;
    manifest["feature_dtype"] = "float32-le";
    manifest["label_dtype"] = "uint8";
    manifest["labels_per_step"] = true;
    manifest["runs_total"] = report.runs_total;
    manifest["runs_ok"] = report.runs_ok;
    manifest["runs_skipped"] = report.runs_skipped;
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < report.class_windows.size(); ++c)
      hist.push_back(report.class_windows[c]);
    manifest["class_histogram"] = hist;
    manifest["columns"] = columns;
    manifest["runs"] = run_index;
    std::ofstream f(cfg.out_dir / "manifest.json", std::ios::binary);
    f << manifest.dump(2) << "\n";
    if (!f) throw IoError("failed writing " + (cfg.out_dir / "manifest.json").string());
  }
  return report;
}

}  // namespace enginefault
