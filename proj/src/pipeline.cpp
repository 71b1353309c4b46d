#include "enginefault/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "enginefault/csv_io.hpp"
#include "enginefault/errors.hpp"

namespace enginefault {

namespace {

TrainConfig train_config_of(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.adam.lr = cfg.learning_rate;
  tc.shuffle_seed = cfg.shuffle_seed;
  tc.dropout_seed = cfg.dropout_seed;
  tc.deterministic_timing = cfg.deterministic_timing;
  tc.persistence = cfg.persistence;
  return tc;
}

void check_model_matches_store(const RunConfig& cfg, const LabeledWindowSet& set) {
  const int want = cfg.model.kind == "transformer" ? cfg.model.transformer.d_model
                                                   : cfg.model.rnn.input_dim;
  if (want != set.channels)
    throw ConfigError("model expects " + std::to_string(want) + " input channels, store has " +
                      std::to_string(set.channels));
}

}  // namespace

CorpusSummary run_generate(const RunConfig& cfg) {
  CorpusConfig cc;
  cc.out_dir = cfg.corpus_dir;
  cc.runs_per_class = cfg.runs_per_class;
  cc.duration_s = cfg.duration_s;
  cc.seed = cfg.corpus_seed;
  cc.noise_amp = cfg.noise_amp;
  cc.missing_rate = cfg.missing_rate;
  cc.threads = cfg.threads;
  return generate_dataset(cc);
}

PreprocessReport run_preprocess(const RunConfig& cfg) {
  PreprocessConfig pc;
  pc.corpus_dir = cfg.corpus_dir;
  pc.out_dir = cfg.store_dir;
  pc.frame_len = cfg.frame_len;
  pc.window_len = cfg.window_len;
  pc.stride = cfg.stride;
  return preprocess_corpus(pc);
}

FitReport run_train(const RunConfig& cfg) {
  LabeledWindowSet set = load_window_store(cfg.store_dir);
  check_model_matches_store(cfg, set);

  std::error_code ec;
  std::filesystem::create_directories(cfg.run_dir, ec);
  if (ec) throw IoError("cannot create " + cfg.run_dir + ": " + ec.message());

  Split split = split_dataset(set, cfg.ratios, cfg.split_seed);
  save_split(split, std::filesystem::path(cfg.run_dir) / "split.json");
  {
    std::ofstream out(std::filesystem::path(cfg.run_dir) / "config.json");
    if (!out) throw IoError("cannot write resolved config to " + cfg.run_dir);
    out << run_config_to_json(cfg).dump(2) << "\n";
  }

  auto model = make_model(cfg.model, cfg.init_seed);
  FitOptions opts;
  opts.run_dir = cfg.run_dir;
  opts.frame_len = cfg.frame_len;
  if (std::filesystem::exists(cfg.corpus_dir)) opts.corpus_dir = cfg.corpus_dir;
  return fit(*model, set, split, train_config_of(cfg), opts);
}

EvalMetrics run_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint_dir,
                         const std::filesystem::path& split_file, const std::string& part,
                         const std::filesystem::path& report_out) {
  LabeledWindowSet set = load_window_store(cfg.store_dir);
  Split split = load_split(set, split_file);
  const std::vector<std::size_t>* indices = nullptr;
  if (part == "train")
    indices = &split.train;
  else if (part == "val")
    indices = &split.val;
  else if (part == "test")
    indices = &split.test;
  else
    throw ConfigError("unknown split part '" + part + "' (expected train, val or test)");

  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  EvalMetrics metrics = evaluate(*ckpt.model, set, ckpt.normalizer, *indices, cfg.batch_size);

  if (!report_out.empty()) {
    nlohmann::ordered_json j;
    j["model"] = ckpt.spec.kind;
    j["checkpoint"] = checkpoint_dir.string();
    j["part"] = part;
    j["loss"] = metrics.loss;
    j["step_accuracy"] = metrics.step_accuracy;
    j["window_accuracy"] = metrics.window_accuracy;
    j["windows"] = metrics.windows;
    j["confusion"] = metrics.confusion;
    std::ofstream out(report_out);
    if (!out) throw IoError("cannot write " + report_out.string());
    out << j.dump(2) << "\n";
    if (!out.good()) throw IoError("failed writing " + report_out.string());
  }
  return metrics;
}

PredictOutcome run_predict(const RunConfig& cfg, const std::filesystem::path& checkpoint_dir,
                           const std::filesystem::path& run_dir,
                           const std::filesystem::path& trace_out) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  RawRun raw = read_raw_run(run_dir);
  MergedFrame frame = merge_run(raw, cfg.frame_len);

  PredictOutcome out;
  out.fault_id = raw.fault_id;
  out.has_fault = raw.fault_id != 0;
  out.trace = causal_trace(*ckpt.model, ckpt.normalizer, frame.values, frame.rows(),
                           static_cast<int>(frame.values.size() / frame.rows()), cfg.window_len);
  out.verdict = aggregate_prediction(out.trace, AggregationRule::kFirstPersistent, cfg.persistence);

  if (out.has_fault) {
    out.onset_step = frame.rows();
    for (std::size_t t = 0; t < frame.labels.size(); ++t)
      if (frame.labels[t] != 0) {
        out.onset_step = t;
        break;
      }
    if (out.onset_step < frame.rows())
      out.latency = detection_latency(out.trace, out.onset_step, raw.fault_id, cfg.persistence);
    else
      out.has_fault = false;  // labeled onset fell outside the frame
  }

  if (!trace_out.empty()) {
    std::ofstream csv(trace_out);
    if (!csv) throw IoError("cannot write " + trace_out.string());
    csv << "step,time,label,predicted";
    for (int c = 0; c < out.trace.classes; ++c) csv << ",p" << c;
    csv << "\n";
    for (std::size_t t = 0; t < out.trace.rows(); ++t) {
      csv << t << "," << format_double(frame.times[t]) << "," << static_cast<int>(frame.labels[t])
          << "," << out.trace.steps[t];
      for (int c = 0; c < out.trace.classes; ++c)
        csv << "," << format_double(out.trace.probs[t * static_cast<std::size_t>(out.trace.classes) +
                                                    static_cast<std::size_t>(c)]);
      csv << "\n";
    }
    if (!csv.good()) throw IoError("failed writing " + trace_out.string());
  }
  return out;
}

void run_report(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_csv) {
  std::ifstream in(metrics_csv);
  if (!in) throw IoError("cannot open " + metrics_csv.string());
  std::string header;
  if (!std::getline(in, header)) throw IoError(metrics_csv.string() + " is empty");

  std::vector<std::string> columns;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) columns.push_back(col);
  }
  if (columns.empty() || columns[0] != "epoch")
    throw IoError(metrics_csv.string() + " does not look like a metrics file");

  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot write " + out_csv.string());
  out << "series,epoch,value\n";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns.size())
      throw IoError(metrics_csv.string() + ": row has " + std::to_string(cells.size()) +
                    " cells, header has " + std::to_string(columns.size()));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (columns[c] == "seconds") continue;
      out << columns[c] << "," << cells[0] << "," << cells[c] << "\n";
    }
  }
  if (!out.good()) throw IoError("failed writing " + out_csv.string());
}

}  // namespace enginefault
