#include "enginefault/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "enginefault/csv_io.hpp"
#include "enginefault/errors.hpp"
#include "enginefault/ops.hpp"
#include "enginefault/preprocess.hpp"

namespace enginefault {

namespace {

// step accuracy of a logits block (B, T, C) against flat targets
std::size_t count_correct_steps(const nn::Tensor& logits, const std::vector<int>& targets) {
  const int c = logits.dim(logits.rank() - 1);
  const auto& vals = logits.values();
  const std::size_t rows = vals.size() / static_cast<std::size_t>(c);
  if (rows != targets.size()) throw ShapeError("target count does not match logits rows");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = vals.data() + r * static_cast<std::size_t>(c);
    int arg = 0;
    for (int k = 1; k < c; ++k)
      if (row[k] > row[arg]) arg = k;
    if (arg == targets[r]) ++correct;
  }
  return correct;
}

}  // namespace

std::pair<double, double> train_epoch(SequenceClassifier& model, const LabeledWindowSet& set,
                                      const Normalizer& norm, const std::vector<std::size_t>& part,
                                      const TrainConfig& cfg, RngState& shuffle_rng,
                                      RngState& dropout_rng) {
  if (part.empty()) throw InvalidArgumentError("cannot train on an empty split part");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");

  auto& params = model.parameters();
  const auto batches = make_batches(part, static_cast<std::size_t>(cfg.batch_size), true, shuffle_rng);

  double loss_sum = 0.0;
  std::size_t steps_total = 0, steps_correct = 0, windows_done = 0;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    Batch batch = gather_batch(set, batches[bi]);
    norm.apply(batch.x);
    nn::zero_grad(params);
    nn::Tensor logits = model.forward(batch.x, true, &dropout_rng);
    nn::Tensor loss = nn::cross_entropy(logits, batch.step_targets);
    nn::backward(loss);
    const double loss_val = loss.item();
    if (!std::isfinite(loss_val)) {
      double max_abs = 0.0, sq = 0.0;
      for (const auto& prm : params) {
        if (!prm.tensor.has_grad()) continue;
        for (double g : prm.tensor.grad()) {
          max_abs = std::max(max_abs, std::abs(g));
          sq += g * g;
        }
      }
      throw Error("training diverged at batch " + std::to_string(bi) + ": loss=" +
                  std::to_string(loss_val) + ", grad max|g|=" + std::to_string(max_abs) +
                  ", grad l2=" + std::to_string(std::sqrt(sq)));
    }
    nn::adam_step(params, cfg.adam);

    loss_sum += loss_val * static_cast<double>(batches[bi].size());
    steps_correct += count_correct_steps(logits, batch.step_targets);
    steps_total += batch.step_targets.size();
    windows_done += batches[bi].size();
  }
  return {loss_sum / static_cast<double>(windows_done),
          static_cast<double>(steps_correct) / static_cast<double>(steps_total)};
}

EvalMetrics evaluate(SequenceClassifier& model, const LabeledWindowSet& set, const Normalizer& norm,
                     const std::vector<std::size_t>& part, int batch_size) {
  if (part.empty()) throw InvalidArgumentError("cannot evaluate an empty split part");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");

  nn::NoGradGuard guard;
  RngState unused(0);
  const auto batches = make_batches(part, static_cast<std::size_t>(batch_size), false, unused);

  int classes = 0;
  EvalMetrics out;
  double loss_sum = 0.0;
  std::size_t steps_total = 0, steps_correct = 0, windows_correct = 0;
  std::vector<std::vector<std::int64_t>> confusion;
  for (const auto& idx : batches) {
    Batch batch = gather_batch(set, idx);
    norm.apply(batch.x);
    nn::Tensor logits = model.forward(batch.x, false, nullptr);
    nn::Tensor loss = nn::cross_entropy(logits, batch.step_targets);
    loss_sum += loss.item() * static_cast<double>(idx.size());
    steps_correct += count_correct_steps(logits, batch.step_targets);
    steps_total += batch.step_targets.size();

    const int t_len = logits.dim(1);
    classes = logits.dim(2);
    if (confusion.empty())
      confusion.assign(static_cast<std::size_t>(classes),
                       std::vector<std::int64_t>(static_cast<std::size_t>(classes), 0));
    const auto& vals = logits.values();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double* row =
          vals.data() + (b * static_cast<std::size_t>(t_len) + static_cast<std::size_t>(t_len - 1)) *
                            static_cast<std::size_t>(classes);
      int arg = 0;
      for (int k = 1; k < classes; ++k)
        if (row[k] > row[arg]) arg = k;
      const int truth = batch.window_targets[b];
      if (truth < 0 || truth >= classes) throw Error("window label outside the class range");
      confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(arg)] += 1;
      if (arg == truth) ++windows_correct;
    }
    out.windows += idx.size();
  }
  out.loss = loss_sum / static_cast<double>(out.windows);
  out.step_accuracy = static_cast<double>(steps_correct) / static_cast<double>(steps_total);
  out.window_accuracy = static_cast<double>(windows_correct) / static_cast<double>(out.windows);
  out.confusion = std::move(confusion);
  return out;
}

namespace {

LatencySummary latency_over_test_runs(SequenceClassifier& model, const Normalizer& norm,
                                      const Split& split, const std::filesystem::path& corpus_dir,
                                      int frame_len, int window_len, int persistence) {
  LatencySummary summary;
  summary.persistence = persistence;
  for (const auto& run_id : split.test_runs) {
    RawRun raw = read_raw_run(corpus_dir / run_id);
    if (raw.fault_id == 0) continue;
    MergedFrame frame = merge_run(raw, frame_len);
    std::size_t onset = frame.rows();
    for (std::size_t t = 0; t < frame.labels.size(); ++t)
      if (frame.labels[t] != 0) {
        onset = t;
        break;
      }
    if (onset == frame.rows()) continue;  // fault window fell outside the frame
    auto trace = causal_trace(model, norm, frame.values, frame.rows(),
                              static_cast<int>(frame.values.size() / frame.rows()), window_len);
    auto res = detection_latency(trace, onset, raw.fault_id, persistence);
    ++summary.evaluated;
    switch (res.status) {
      case DetectionStatus::kDetected:
        ++summary.detected;
        summary.latencies.push_back(res.latency_steps);
        break;
      case DetectionStatus::kNotDetected: ++summary.not_detected; break;
      case DetectionStatus::kFalseEarly: ++summary.false_early; break;
    }
  }
  std::sort(summary.latencies.begin(), summary.latencies.end());
  if (!summary.latencies.empty()) {
    const std::size_t n = summary.latencies.size();
    summary.median_steps = n % 2 == 1 ? static_cast<double>(summary.latencies[n / 2])
                                      : 0.5 * static_cast<double>(summary.latencies[n / 2 - 1] +
                                                                  summary.latencies[n / 2]);
    double sum = 0.0;
    for (auto v : summary.latencies) sum += static_cast<double>(v);
    summary.mean_steps = sum / static_cast<double>(n);
  }
  return summary;
}

}  // namespace

FitReport fit(SequenceClassifier& model, const LabeledWindowSet& set, const Split& split,
              const TrainConfig& cfg, const FitOptions& opts) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be positive");
  std::error_code ec;
  std::filesystem::create_directories(opts.run_dir, ec);
  if (ec) throw IoError("cannot create " + opts.run_dir.string() + ": " + ec.message());

  FitReport report;
  report.checkpoint_dir = opts.run_dir / "checkpoint_best";
  report.metrics_path = opts.run_dir / "metrics.csv";

  const Normalizer norm = Normalizer::fit(set, split.train);

  std::ofstream metrics(report.metrics_path, std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + report.metrics_path.string());
  metrics << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  metrics.flush();

  RngState shuffle_rng = RngState(cfg.shuffle_seed).fork(0x51);
  RngState dropout_rng = RngState(cfg.dropout_seed).fork(0xD0);

  double best_val_acc = -1.0, best_val_loss = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [train_loss, train_acc] = train_epoch(model, set, norm, split.train, cfg, shuffle_rng,
                                               dropout_rng);
    auto val = evaluate(model, set, norm, split.val, cfg.batch_size);
    const auto t1 = std::chrono::steady_clock::now();

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = train_loss;
    em.train_acc = train_acc;
    em.val_loss = val.loss;
    em.val_acc = val.window_accuracy;
    em.seconds = cfg.deterministic_timing
                     ? 0.0
                     : std::chrono::duration<double>(t1 - t0).count();
    report.epochs.push_back(em);

    char line[256];
    std::snprintf(line, sizeof(line), "%d,%s,%s,%s,%s,%.3f", epoch, format_double(train_loss).c_str(),
                  format_double(train_acc).c_str(), format_double(val.loss).c_str(),
                  format_double(val.window_accuracy).c_str(), em.seconds);
    metrics << line << "\n";
    metrics.flush();

    const bool improved = val.window_accuracy > best_val_acc ||
                          (val.window_accuracy == best_val_acc && val.loss < best_val_loss);
    if (improved) {
      best_val_acc = val.window_accuracy;
      best_val_loss = val.loss;
      report.best_epoch = epoch;
      save_checkpoint(model, norm, report.checkpoint_dir);
    }
  }
  if (!metrics.good()) throw IoError("failed writing " + report.metrics_path.string());
  metrics.close();

  // score the held-out part through the artifact, not the in-memory model
  Checkpoint best = load_checkpoint(report.checkpoint_dir);
  report.test = evaluate(*best.model, set, best.normalizer, split.test, cfg.batch_size);

  if (opts.corpus_dir) {
    report.latency = latency_over_test_runs(*best.model, best.normalizer, split, *opts.corpus_dir,
                                            opts.frame_len, set.window_len, cfg.persistence);
  }
  write_report_json(report, model.spec().kind, opts.run_dir / "report.json");
  return report;
}

void write_report_json(const FitReport& report, const std::string& model_kind,
                       const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["model"] = model_kind;
  j["best_epoch"] = report.best_epoch;
  j["checkpoint"] = report.checkpoint_dir.filename().string();
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& em : report.epochs) {
    j["epochs"].push_back({{"epoch", em.epoch},
                           {"train_loss", em.train_loss},
                           {"train_acc", em.train_acc},
                           {"val_loss", em.val_loss},
                           {"val_acc", em.val_acc},
                           {"seconds", em.seconds}});
  }
  j["test"] = {{"loss", report.test.loss},
               {"step_accuracy", report.test.step_accuracy},
               {"window_accuracy", report.test.window_accuracy},
               {"windows", report.test.windows},
               {"confusion", report.test.confusion}};
  if (report.latency) {
    const auto& lat = *report.latency;
    j["latency"] = {{"rule", "first_persistent"},
                    {"persistence", lat.persistence},
                    {"evaluated", lat.evaluated},
                    {"detected", lat.detected},
                    {"not_detected", lat.not_detected},
                    {"false_early", lat.false_early},
                    {"median_steps", lat.median_steps},
                    {"mean_steps", lat.mean_steps},
                    {"latencies", lat.latencies}};
  } else {
    j["latency"] = nullptr;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out.good()) throw IoError("failed writing " + path.string());
}

}  // namespace enginefault
