#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

fs::path binary() {
  const char* bin = std::getenv("ENGINEFAULT_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "ENGINEFAULT_BIN must point at the cli binary");
  return fs::path(bin);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ef_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Returns the process exit code, with stdout+stderr captured into `log`.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = binary().string() + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_config(const fs::path& dir, const fs::path& cfg_path, int epochs) {
  std::ofstream out(cfg_path);
  out << "{\n"
      << "  \"corpus\": {\"dir\": \"" << (dir / "corpus").string()
      << "\", \"runs_per_class\": 3, \"duration_s\": 150, \"seed\": 11},\n"
      << "  \"windows\": {\"store_dir\": \"" << (dir / "store").string()
      << "\", \"frame_len\": 150},\n"
      << "  \"training\": {\"epochs\": " << epochs << ", \"deterministic_timing\": true},\n"
      << "  \"run_dir\": \"" << (dir / "run").string() << "\"\n"
      << "}\n";
}

}  // namespace

TEST_CASE("usage and validation failures exit 1 with the field named") {
  TempDir tmp("err");
  const fs::path log = tmp.path / "log.txt";

  CHECK(run_cli("", log) == 1);                       // missing subcommand
  CHECK(run_cli("train --no-such-flag", log) == 1);   // unknown flag
  CHECK(run_cli("evaluate", log) == 1);               // missing required --checkpoint

  std::ofstream bad(tmp.path / "bad.json");
  bad << R"({"model": {"kind": "transformer", "transformer": {"num_heads": 5}}})";
  bad.close();
  CHECK(run_cli("train --config " + (tmp.path / "bad.json").string(), log) == 1);
  auto msg = slurp(log);
  CHECK(msg.find("config.model.transformer.num_heads") != std::string::npos);
  CHECK(msg.find("not divisible") != std::string::npos);

  std::ofstream unknown(tmp.path / "unknown.json");
  unknown << R"({"training": {"epoch": 3}})";
  unknown.close();
  CHECK(run_cli("train --config " + (tmp.path / "unknown.json").string(), log) == 1);
  CHECK(slurp(log).find("config.training.epoch: unknown field") != std::string::npos);

  CHECK(run_cli("train --epochs 0", log) == 1);
}

TEST_CASE("runtime failures exit 2") {
  TempDir tmp("rt");
  const fs::path log = tmp.path / "log.txt";
  // store directory does not exist
  std::ofstream cfg(tmp.path / "cfg.json");
  cfg << R"({"windows": {"store_dir": ")" << (tmp.path / "absent").string() << R"("}})";
  cfg.close();
  CHECK(run_cli("train --config " + (tmp.path / "cfg.json").string(), log) == 2);
  // checkpoint directory does not exist either
  CHECK(run_cli("evaluate --checkpoint " + (tmp.path / "nock").string() + " --config " +
                    (tmp.path / "cfg.json").string(),
                log) == 2);
}

TEST_CASE("the full pipeline runs through the binary") {
  TempDir tmp("pipe");
  const fs::path log = tmp.path / "log.txt";
  const fs::path cfg = tmp.path / "cfg.json";
  write_config(tmp.path, cfg, 2);

  REQUIRE(run_cli("generate --config " + cfg.string(), log) == 0);
  CHECK(slurp(log).find("36 runs across 12 classes") != std::string::npos);
  REQUIRE(run_cli("preprocess --config " + cfg.string(), log) == 0);
  REQUIRE(run_cli("train --config " + cfg.string(), log) == 0);

  const fs::path run = tmp.path / "run";
  CHECK(fs::exists(run / "metrics.csv"));
  CHECK(fs::exists(run / "split.json"));
  CHECK(fs::exists(run / "config.json"));
  CHECK(fs::exists(run / "report.json"));
  CHECK(fs::exists(run / "checkpoint_best" / "params.bin"));

  // metrics has header + 2 epochs
  std::istringstream metrics(slurp(run / "metrics.csv"));
  std::string line;
  int rows = 0;
  std::getline(metrics, line);
  CHECK(line == "epoch,train_loss,train_acc,val_loss,val_acc,seconds");
  while (std::getline(metrics, line)) ++rows;
  CHECK(rows == 2);

  // evaluate twice: same exit, byte-identical reports
  const std::string eval_cmd = "evaluate --config " + cfg.string() + " --checkpoint " +
                               (run / "checkpoint_best").string() + " --part val --out ";
  REQUIRE(run_cli(eval_cmd + (tmp.path / "eval_a.json").string(), log) == 0);
  REQUIRE(run_cli(eval_cmd + (tmp.path / "eval_b.json").string(), log) == 0);
  const auto eval_a = slurp(tmp.path / "eval_a.json");
  CHECK(eval_a == slurp(tmp.path / "eval_b.json"));
  CHECK(eval_a.find("\"part\": \"val\"") != std::string::npos);

  // predict on a faulty run emits the trace csv
  REQUIRE(run_cli("predict --config " + cfg.string() + " --checkpoint " +
                      (run / "checkpoint_best").string() + " --run " +
                      (tmp.path / "corpus" / "7" / "run_0001").string() + " --out " +
                      (tmp.path / "trace.csv").string(),
                  log) == 0);
  CHECK(slurp(log).find("verdict: class") != std::string::npos);
  std::istringstream trace(slurp(tmp.path / "trace.csv"));
  std::getline(trace, line);
  CHECK(line.rfind("step,time,label,predicted,p0,", 0) == 0);
  rows = 0;
  while (std::getline(trace, line)) ++rows;
  CHECK(rows == 150);

  // report reshapes metrics into long form
  REQUIRE(run_cli("report --config " + cfg.string(), log) == 0);
  std::istringstream curves(slurp(run / "curves.csv"));
  std::getline(curves, line);
  CHECK(line == "series,epoch,value");
  rows = 0;
  while (std::getline(curves, line)) ++rows;
  CHECK(rows == 2 * 4);  // 4 series x 2 epochs, seconds dropped
}

TEST_CASE("the master seed flag reroutes every stage") {
  TempDir tmp("seed");
  const fs::path log = tmp.path / "log.txt";
  auto cfg_for = [&](const std::string& name) {
    const fs::path dir = tmp.path / name;
    fs::create_directories(dir);
    const fs::path cfg = dir / "cfg.json";
    std::ofstream out(cfg);
    out << "{\n"
        << "  \"corpus\": {\"dir\": \"" << (dir / "corpus").string()
        << "\", \"runs_per_class\": 1, \"duration_s\": 100}\n"
        << "}\n";
    return cfg;
  };

  REQUIRE(run_cli("generate --config " + cfg_for("a").string() + " --seed 21", log) == 0);
  REQUIRE(run_cli("generate --config " + cfg_for("b").string() + " --seed 21", log) == 0);
  REQUIRE(run_cli("generate --config " + cfg_for("c").string() + " --seed 22", log) == 0);

  const std::string rel = "corpus/3/run_0000/output_signal.csv";
  const auto a = slurp(tmp.path / "a" / rel);
  CHECK(a == slurp(tmp.path / "b" / rel));
  CHECK(a != slurp(tmp.path / "c" / rel));
  CHECK(a.size() > 1000);
}
