#include "enginefault/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "enginefault/errors.hpp"

namespace enginefault {

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* name, const std::string& where) {
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError(where + ": bad or missing field '" + name + "': " + e.what());
  }
}

nlohmann::json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptCheckpointError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpointError("invalid json in " + path.string() + ": " + e.what());
  }
}

}  // namespace

nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = spec.kind;
  if (spec.kind == "transformer") {
    const auto& c = spec.transformer;
    j["transformer"] = {{"d_model", c.d_model},
                        {"num_heads", c.num_heads},
                        {"num_encoder_layers", c.num_encoder_layers},
                        {"num_decoder_layers", c.num_decoder_layers},
                        {"dim_feedforward", c.dim_feedforward},
                        {"dropout", c.dropout},
                        {"positional_encoding", c.positional_encoding},
                        {"num_classes", c.num_classes}};
  } else if (spec.kind == "rnn") {
    const auto& c = spec.rnn;
    j["rnn"] = {{"input_dim", c.input_dim},
                {"hidden_dim", c.hidden_dim},
                {"num_layers", c.num_layers},
                {"dropout", c.dropout},
                {"num_classes", c.num_classes}};
  } else {
    throw ConfigError("unknown model kind '" + spec.kind + "'");
  }
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.kind = field<std::string>(j, "kind", "model spec");
  if (spec.kind == "transformer") {
    const auto& c = j.contains("transformer") ? j.at("transformer") : nlohmann::json::object();
    auto& t = spec.transformer;
    t.d_model = field<int>(c, "d_model", "transformer config");
    t.num_heads = field<int>(c, "num_heads", "transformer config");
    t.num_encoder_layers = field<int>(c, "num_encoder_layers", "transformer config");
    t.num_decoder_layers = field<int>(c, "num_decoder_layers", "transformer config");
    t.dim_feedforward = field<int>(c, "dim_feedforward", "transformer config");
    t.dropout = field<double>(c, "dropout", "transformer config");
    t.positional_encoding = field<bool>(c, "positional_encoding", "transformer config");
    t.num_classes = field<int>(c, "num_classes", "transformer config");
  } else if (spec.kind == "rnn") {
    const auto& c = j.contains("rnn") ? j.at("rnn") : nlohmann::json::object();
    auto& r = spec.rnn;
    r.input_dim = field<int>(c, "input_dim", "rnn config");
    r.hidden_dim = field<int>(c, "hidden_dim", "rnn config");
    r.num_layers = field<int>(c, "num_layers", "rnn config");
    r.dropout = field<double>(c, "dropout", "rnn config");
    r.num_classes = field<int>(c, "num_classes", "rnn config");
  } else {
    throw CorruptCheckpointError("unknown model kind '" + spec.kind + "'");
  }
  return spec;
}

void save_checkpoint(SequenceClassifier& model, const Normalizer& norm,
                     const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  auto& params = model.parameters();
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = model.spec().kind;
  manifest["params"] = nlohmann::ordered_json::array();

  std::vector<float> blob;
  std::size_t offset = 0;
  for (const auto& prm : params) {
    nlohmann::ordered_json entry;
    entry["name"] = prm.name;
    entry["shape"] = prm.tensor.shape();
    entry["offset"] = offset;
    entry["size"] = prm.tensor.size();
    manifest["params"].push_back(entry);
    for (double v : prm.tensor.values()) blob.push_back(static_cast<float>(v));
    offset += static_cast<std::size_t>(prm.tensor.size());
  }
  manifest["total_values"] = offset;

  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "params.bin").string());
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!out.good()) throw IoError("failed writing " + (dir / "params.bin").string());
  }
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
  }
  {
    nlohmann::ordered_json cfg = model_spec_to_json(model.spec());
    cfg["format_version"] = kCheckpointFormatVersion;
    cfg["normalizer"] = {{"mean", norm.mean}, {"stdev", norm.stdev}};
    std::ofstream out(dir / "config.json");
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
    out << cfg.dump(2) << "\n";
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto cfg = parse_file(dir / "config.json");
  const int version = field<int>(cfg, "format_version", "config.json");
  if (version != kCheckpointFormatVersion)
    throw CorruptCheckpointError("checkpoint format version " + std::to_string(version) +
                                 " is not supported (expected " +
                                 std::to_string(kCheckpointFormatVersion) + ")");

  Checkpoint ckpt;
  ckpt.spec = model_spec_from_json(cfg);
  if (!cfg.contains("normalizer"))
    throw CorruptCheckpointError("config.json is missing the normalizer block");
  ckpt.normalizer.mean = field<std::vector<double>>(cfg.at("normalizer"), "mean", "normalizer");
  ckpt.normalizer.stdev = field<std::vector<double>>(cfg.at("normalizer"), "stdev", "normalizer");
  if (ckpt.normalizer.mean.size() != ckpt.normalizer.stdev.size())
    throw CorruptCheckpointError("normalizer mean and stdev lengths differ");

  ckpt.model = make_model(ckpt.spec, 0);
  auto& params = ckpt.model->parameters();

  const auto manifest = parse_file(dir / "manifest.json");
  if (field<int>(manifest, "format_version", "manifest.json") != kCheckpointFormatVersion)
    throw CorruptCheckpointError("manifest format version mismatch");
  if (field<std::string>(manifest, "kind", "manifest.json") != ckpt.spec.kind)
    throw CorruptCheckpointError("manifest kind disagrees with config.json");
  const auto& entries = manifest.at("params");
  if (entries.size() != params.size())
    throw CorruptCheckpointError("checkpoint has " + std::to_string(entries.size()) +
                                 " parameters, model wants " + std::to_string(params.size()));

  const std::size_t total = field<std::size_t>(manifest, "total_values", "manifest.json");
  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw CorruptCheckpointError("cannot open " + (dir / "params.bin").string());
  in.seekg(0, std::ios::end);
  const std::size_t bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes != total * sizeof(float))
    throw CorruptCheckpointError("params.bin is " + std::to_string(bytes) + " bytes, expected " +
                                 std::to_string(total * sizeof(float)));
  std::vector<float> blob(total);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw CorruptCheckpointError("short read on " + (dir / "params.bin").string());

  std::size_t expect_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = entries[i];
    const auto name = field<std::string>(entry, "name", "manifest param");
    const auto shape = field<std::vector<int>>(entry, "shape", "manifest param");
    const auto offset = field<std::size_t>(entry, "offset", "manifest param");
    const auto size = field<std::size_t>(entry, "size", "manifest param");
    auto& prm = params[i];
    if (name != prm.name)
      throw CorruptCheckpointError("parameter " + std::to_string(i) + " is '" + name +
                                   "', model wants '" + prm.name + "'");
    if (shape != prm.tensor.shape())
      throw CorruptCheckpointError("parameter '" + name + "' has shape " + nn::shape_str(shape) +
                                   ", model wants " + nn::shape_str(prm.tensor.shape()));
    if (offset != expect_offset || size != static_cast<std::size_t>(prm.tensor.size()))
      throw CorruptCheckpointError("parameter '" + name + "' has inconsistent offset or size");
    auto& vals = prm.tensor.values();
    for (std::size_t k = 0; k < size; ++k) vals[k] = static_cast<double>(blob[offset + k]);
    expect_offset += size;
  }
  if (expect_offset != total)
    throw CorruptCheckpointError("manifest covers " + std::to_string(expect_offset) +
                                 " values, total_values says " + std::to_string(total));
  return ckpt;
}

}  // namespace enginefault
