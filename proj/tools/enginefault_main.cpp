// Command-line front end: generate / preprocess / train / evaluate / predict
// / report. Exit codes: 0 success, 1 configuration or usage error, 2 runtime
// failure.
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "enginefault/config.hpp"
#include "enginefault/errors.hpp"
#include "enginefault/pipeline.hpp"

namespace {

using namespace enginefault;

struct CommonFlags {
  std::string config_path;
  std::string out;
  std::string model;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int epochs = 0;
  bool epochs_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--seed", flags.seed, "master seed overriding every stage seed")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--out", flags.out, "output directory or file for this command");
  cmd->add_option("--model", flags.model, "model kind: transformer or rnn")
      ->check(CLI::IsMember({"transformer", "rnn"}));
  cmd->add_option("--epochs", flags.epochs, "training epochs")
      ->each([&flags](const std::string&) { flags.epochs_set = true; });
}

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path);
  if (flags.seed_set) apply_master_seed(cfg, flags.seed);
  if (!flags.model.empty()) cfg.model.kind = flags.model;
  if (flags.epochs_set) {
    if (flags.epochs < 1) throw ConfigError("--epochs must be at least 1");
    cfg.epochs = flags.epochs;
  }
  return cfg;
}

int dispatch(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fault simulation, windowing and sequence-classifier training"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint_dir, split_file, part = "test", run_path, metrics_path;

  auto* gen = app.add_subcommand("generate", "synthesize a labeled run corpus");
  add_common(gen, flags);

  auto* prep = app.add_subcommand("preprocess", "merge, label and window a corpus into a store");
  add_common(prep, flags);

  auto* train = app.add_subcommand("train", "train a classifier on a window store");
  add_common(train, flags);

  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on one split part");
  add_common(eval, flags);
  eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("--split-file", split_file, "split.json path (default: <run_dir>/split.json)");
  eval->add_option("--part", part, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  auto* pred = app.add_subcommand("predict", "causal per-step trace for one raw run directory");
  add_common(pred, flags);
  pred->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  pred->add_option("--run", run_path, "raw run directory")->required();

  auto* rep = app.add_subcommand("report", "reshape metrics.csv into plot-ready curves");
  add_common(rep, flags);
  rep->add_option("--metrics", metrics_path, "metrics.csv path (default: <run_dir>/metrics.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (gen->parsed()) {
    return dispatch([&] {
      RunConfig cfg = resolve_config(flags);
      if (!flags.out.empty()) cfg.corpus_dir = flags.out;
      auto summary = run_generate(cfg);
      std::printf("wrote %d runs across %d classes to %s\n", summary.runs_written, summary.classes,
                  cfg.corpus_dir.c_str());
      return 0;
    });
  }
  if (prep->parsed()) {
    return dispatch([&] {
      RunConfig cfg = resolve_config(flags);
      if (!flags.out.empty()) cfg.store_dir = flags.out;
      auto report = run_preprocess(cfg);
      std::printf("windowed %d of %d runs into %zu windows at %s\n", report.runs_ok,
                  report.runs_total, report.windows, cfg.store_dir.c_str());
      return 0;
    });
  }
  if (train->parsed()) {
    return dispatch([&] {
      RunConfig cfg = resolve_config(flags);
      if (!flags.out.empty()) cfg.run_dir = flags.out;
      auto fitrep = run_train(cfg);
      std::printf("best epoch %d, test window accuracy %.4f, artifacts in %s\n", fitrep.best_epoch,
                  fitrep.test.window_accuracy, cfg.run_dir.c_str());
      return 0;
    });
  }
  if (eval->parsed()) {
    return dispatch([&] {
      RunConfig cfg = resolve_config(flags);
      const std::filesystem::path split_path =
          split_file.empty() ? std::filesystem::path(cfg.run_dir) / "split.json"
                             : std::filesystem::path(split_file);
      const std::filesystem::path out = flags.out.empty()
                                            ? std::filesystem::path(cfg.run_dir) / "eval_report.json"
                                            : std::filesystem::path(flags.out);
      auto metrics = run_evaluate(cfg, checkpoint_dir, split_path, part, out);
      std::printf("%s: loss %.4f, step accuracy %.4f, window accuracy %.4f over %zu windows\n",
                  part.c_str(), metrics.loss, metrics.step_accuracy, metrics.window_accuracy,
                  metrics.windows);
      return 0;
    });
  }
  if (pred->parsed()) {
    return dispatch([&] {
      RunConfig cfg = resolve_config(flags);
      const std::filesystem::path out =
          flags.out.empty() ? std::filesystem::path{} : std::filesystem::path(flags.out);
      auto outcome = run_predict(cfg, checkpoint_dir, run_path, out);
      std::printf("verdict: class %d\n", outcome.verdict);
      if (outcome.has_fault) {
        switch (outcome.latency.status) {
          case DetectionStatus::kDetected:
            std::printf("fault %d detected %lld steps after onset (step %lld)\n", outcome.fault_id,
                        static_cast<long long>(outcome.latency.latency_steps),
                        static_cast<long long>(outcome.latency.fire_step));
            break;
          case DetectionStatus::kFalseEarly:
            std::printf("fault %d fired %lld steps before onset\n", outcome.fault_id,
                        static_cast<long long>(-outcome.latency.latency_steps));
            break;
          case DetectionStatus::kNotDetected:
            std::printf("fault %d was never detected\n", outcome.fault_id);
            break;
        }
      }
      return 0;
    });
  }
  if (rep->parsed()) {
    return dispatch([&] {
      RunConfig cfg = resolve_config(flags);
      const std::filesystem::path metrics = metrics_path.empty()
                                                ? std::filesystem::path(cfg.run_dir) / "metrics.csv"
                                                : std::filesystem::path(metrics_path);
      const std::filesystem::path out = flags.out.empty()
                                            ? std::filesystem::path(cfg.run_dir) / "curves.csv"
                                            : std::filesystem::path(flags.out);
      run_report(metrics, out);
      std::printf("wrote %s\n", out.string().c_str());
      return 0;
    });
  }
  return 1;
}
