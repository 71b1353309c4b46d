#include "enginefault/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "enginefault/checkpoint.hpp"
#include "enginefault/errors.hpp"

namespace enginefault {

namespace {

class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  ~Section() = default;

  void get(const char* key, int& out) { fetch(key, out, "an integer"); }
  void get(const char* key, double& out) { fetch(key, out, "a number"); }
  void get(const char* key, bool& out) { fetch(key, out, "a boolean"); }
  void get(const char* key, std::string& out) { fetch(key, out, "a string"); }
  void get(const char* key, std::uint64_t& out) { fetch(key, out, "a non-negative integer"); }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!seen_.count(key)) throw ConfigError(path_ + "." + key + ": unknown field");
    }
  }

  const std::string& path() const { return path_; }

 private:
  template <typename T>
  void fetch(const char* key, T& out, const char* kind) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": expected " + kind);
    }
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& reason) {
  if (!ok) throw ConfigError(path + ": " + reason);
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  Section root(j, "config");

  if (const auto* c = root.sub("corpus")) {
    Section s(*c, "config.corpus");
    s.get("dir", cfg.corpus_dir);
    s.get("runs_per_class", cfg.runs_per_class);
    s.get("duration_s", cfg.duration_s);
    s.get("noise_amp", cfg.noise_amp);
    s.get("missing_rate", cfg.missing_rate);
    s.get("threads", cfg.threads);
    s.get("seed", cfg.corpus_seed);
    s.finish();
  }
  if (const auto* c = root.sub("windows")) {
    Section s(*c, "config.windows");
    s.get("store_dir", cfg.store_dir);
    s.get("frame_len", cfg.frame_len);
    s.get("window_len", cfg.window_len);
    s.get("stride", cfg.stride);
    s.finish();
  }
  if (const auto* c = root.sub("split")) {
    Section s(*c, "config.split");
    s.get("train", cfg.ratios.train);
    s.get("val", cfg.ratios.val);
    s.get("test", cfg.ratios.test);
    s.get("seed", cfg.split_seed);
    s.finish();
  }
  if (const auto* c = root.sub("model")) {
    Section s(*c, "config.model");
    s.get("kind", cfg.model.kind);
    if (const auto* t = s.sub("transformer")) {
      Section ts(*t, "config.model.transformer");
      auto& m = cfg.model.transformer;
      ts.get("d_model", m.d_model);
      ts.get("num_heads", m.num_heads);
      ts.get("num_encoder_layers", m.num_encoder_layers);
      ts.get("num_decoder_layers", m.num_decoder_layers);
      ts.get("dim_feedforward", m.dim_feedforward);
      ts.get("dropout", m.dropout);
      ts.get("positional_encoding", m.positional_encoding);
      ts.get("num_classes", m.num_classes);
      ts.finish();
    }
    if (const auto* r = s.sub("rnn")) {
      Section rs(*r, "config.model.rnn");
      auto& m = cfg.model.rnn;
      rs.get("input_dim", m.input_dim);
      rs.get("hidden_dim", m.hidden_dim);
      rs.get("num_layers", m.num_layers);
      rs.get("dropout", m.dropout);
      rs.get("num_classes", m.num_classes);
      rs.finish();
    }
    s.finish();
  }
  if (const auto* c = root.sub("training")) {
    Section s(*c, "config.training");
    s.get("epochs", cfg.epochs);
    s.get("batch_size", cfg.batch_size);
    s.get("learning_rate", cfg.learning_rate);
    s.get("deterministic_timing", cfg.deterministic_timing);
    s.get("persistence", cfg.persistence);
    s.get("init_seed", cfg.init_seed);
    s.get("shuffle_seed", cfg.shuffle_seed);
    s.get("dropout_seed", cfg.dropout_seed);
    s.finish();
  }
  root.get("run_dir", cfg.run_dir);
  root.finish();

  // cross-field checks, each named by the offending path
  require(cfg.runs_per_class >= 1, "config.corpus.runs_per_class", "must be at least 1");
  require(cfg.duration_s >= 10, "config.corpus.duration_s", "must be at least 10 seconds");
  require(cfg.noise_amp >= 0.0, "config.corpus.noise_amp", "must be non-negative");
  require(cfg.missing_rate >= 0.0 && cfg.missing_rate < 1.0, "config.corpus.missing_rate",
          "must lie in [0, 1)");
  require(cfg.threads >= 0, "config.corpus.threads", "must be non-negative");
  require(cfg.frame_len >= 2, "config.windows.frame_len", "must be at least 2");
  require(cfg.window_len >= 1, "config.windows.window_len", "must be at least 1");
  require(cfg.stride >= 1, "config.windows.stride", "must be at least 1");
  require(cfg.window_len <= cfg.frame_len, "config.windows.window_len",
          "must not exceed frame_len " + std::to_string(cfg.frame_len));
  require(cfg.ratios.train > 0.0 && cfg.ratios.val > 0.0 && cfg.ratios.test > 0.0, "config.split",
          "all three ratios must be positive");
  require(std::abs(cfg.ratios.train + cfg.ratios.val + cfg.ratios.test - 1.0) <= 1e-9, "config.split",
          "ratios must sum to 1");
  require(cfg.model.kind == "transformer" || cfg.model.kind == "rnn", "config.model.kind",
          "must be 'transformer' or 'rnn'");
  {
    const auto& m = cfg.model.transformer;
    require(m.d_model >= 1, "config.model.transformer.d_model", "must be positive");
    require(m.num_heads >= 1, "config.model.transformer.num_heads", "must be positive");
    require(m.d_model % m.num_heads == 0, "config.model.transformer.num_heads",
            "d_model " + std::to_string(m.d_model) + " is not divisible by num_heads " +
                std::to_string(m.num_heads));
    require(m.num_encoder_layers >= 1 && m.num_decoder_layers >= 1,
            "config.model.transformer.num_encoder_layers", "layer counts must be at least 1");
    require(m.dim_feedforward >= 1, "config.model.transformer.dim_feedforward", "must be positive");
    require(m.dropout >= 0.0 && m.dropout < 1.0, "config.model.transformer.dropout",
            "must lie in [0, 1)");
    require(m.num_classes >= 2, "config.model.transformer.num_classes", "must be at least 2");
  }
  {
    const auto& m = cfg.model.rnn;
    require(m.input_dim >= 1, "config.model.rnn.input_dim", "must be positive");
    require(m.hidden_dim >= 1, "config.model.rnn.hidden_dim", "must be positive");
    require(m.num_layers >= 1, "config.model.rnn.num_layers", "must be at least 1");
    require(m.dropout >= 0.0 && m.dropout < 1.0, "config.model.rnn.dropout", "must lie in [0, 1)");
    require(m.num_classes >= 2, "config.model.rnn.num_classes", "must be at least 2");
  }
  require(cfg.epochs >= 1, "config.training.epochs", "must be at least 1");
  require(cfg.batch_size >= 1, "config.training.batch_size", "must be at least 1");
  require(cfg.learning_rate > 0.0, "config.training.learning_rate", "must be positive");
  require(cfg.persistence >= 1, "config.training.persistence", "must be at least 1");
  require(!cfg.corpus_dir.empty(), "config.corpus.dir", "must not be empty");
  require(!cfg.store_dir.empty(), "config.windows.store_dir", "must not be empty");
  require(!cfg.run_dir.empty(), "config.run_dir", "must not be empty");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid json: " + e.what());
  }
  return run_config_from_json(j);
}

nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["corpus"] = {{"dir", cfg.corpus_dir},       {"runs_per_class", cfg.runs_per_class},
                 {"duration_s", cfg.duration_s}, {"noise_amp", cfg.noise_amp},
                 {"missing_rate", cfg.missing_rate}, {"threads", cfg.threads},
                 {"seed", cfg.corpus_seed}};
  j["windows"] = {{"store_dir", cfg.store_dir},
                  {"frame_len", cfg.frame_len},
                  {"window_len", cfg.window_len},
                  {"stride", cfg.stride}};
  j["split"] = {{"train", cfg.ratios.train},
                {"val", cfg.ratios.val},
                {"test", cfg.ratios.test},
                {"seed", cfg.split_seed}};
  j["model"] = model_spec_to_json(cfg.model);
  // echo both model blocks so the resolved file restores either kind
  if (!j["model"].contains("transformer")) {
    ModelSpec t = cfg.model;
    t.kind = "transformer";
    j["model"]["transformer"] = model_spec_to_json(t)["transformer"];
  }
  if (!j["model"].contains("rnn")) {
    ModelSpec r = cfg.model;
    r.kind = "rnn";
    j["model"]["rnn"] = model_spec_to_json(r)["rnn"];
  }
  j["training"] = {{"epochs", cfg.epochs},
                   {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate},
                   {"deterministic_timing", cfg.deterministic_timing},
                   {"persistence", cfg.persistence},
                   {"init_seed", cfg.init_seed},
                   {"shuffle_seed", cfg.shuffle_seed},
                   {"dropout_seed", cfg.dropout_seed}};
  j["run_dir"] = cfg.run_dir;
  return j;
}

void apply_master_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.corpus_seed = seed;
  cfg.split_seed = seed + 1;
  cfg.init_seed = seed + 2;
  cfg.shuffle_seed = seed + 3;
  cfg.dropout_seed = seed + 4;
}

}  // namespace enginefault
