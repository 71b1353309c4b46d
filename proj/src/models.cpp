#include "enginefault/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "enginefault/errors.hpp"
#include "enginefault/ops.hpp"

namespace enginefault {

using nn::Tensor;

Normalizer Normalizer::fit(const LabeledWindowSet& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidArgumentError("cannot fit a normalizer on zero windows");
  const std::size_t w = static_cast<std::size_t>(set.window_len);
  const std::size_t c = static_cast<std::size_t>(set.channels);
  Normalizer norm;
  norm.mean.assign(c, 0.0);
  norm.stdev.assign(c, 0.0);

  std::size_t rows = 0;
  for (auto idx : indices) {
    if (idx >= set.count()) throw IndexError("normalizer index " + std::to_string(idx) + " out of range");
    const float* src = set.features.data() + idx * w * c;
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t ch = 0; ch < c; ++ch) norm.mean[ch] += static_cast<double>(src[t * c + ch]);
    rows += w;
  }
  for (std::size_t ch = 0; ch < c; ++ch) norm.mean[ch] /= static_cast<double>(rows);

  for (auto idx : indices) {
    const float* src = set.features.data() + idx * w * c;
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = static_cast<double>(src[t * c + ch]) - norm.mean[ch];
        norm.stdev[ch] += d * d;
      }
  }
  for (std::size_t ch = 0; ch < c; ++ch)
    norm.stdev[ch] = std::max(std::sqrt(norm.stdev[ch] / static_cast<double>(rows)), 1e-8);
  return norm;
}

void Normalizer::apply(Tensor& x) const {
  if (x.rank() < 1) throw ShapeError("normalizer needs at least rank 1");
  const std::size_t c = mean.size();
  if (static_cast<std::size_t>(x.dim(x.rank() - 1)) != c)
    throw ShapeError("normalizer fitted for " + std::to_string(c) + " channels, tensor has " +
                     std::to_string(x.dim(x.rank() - 1)));
  auto& vals = x.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const std::size_t ch = i % c;
    double z = (vals[i] - mean[ch]) / stdev[ch];
    vals[i] = std::clamp(z, -kClamp, kClamp);
  }
}

namespace {

void check_transformer_config(const TransformerConfig& cfg) {
  if (cfg.d_model <= 0 || cfg.dim_feedforward <= 0 || cfg.num_classes < 2)
    throw ConfigError("transformer dimensions must be positive and num_classes at least 2");
  if (cfg.num_encoder_layers < 1 || cfg.num_decoder_layers < 1)
    throw ConfigError("transformer needs at least one encoder and one decoder layer");
  if (cfg.num_heads <= 0 || cfg.d_model % cfg.num_heads != 0)
    throw ConfigError("d_model " + std::to_string(cfg.d_model) + " is not divisible by num_heads " +
                      std::to_string(cfg.num_heads));
  if (!(cfg.dropout >= 0.0) || cfg.dropout >= 1.0)
    throw ConfigError("dropout must lie in [0, 1)");
}

void check_rnn_config(const RnnConfig& cfg) {
  if (cfg.input_dim <= 0 || cfg.hidden_dim <= 0 || cfg.num_classes < 2)
    throw ConfigError("rnn dimensions must be positive and num_classes at least 2");
  if (cfg.num_layers < 1) throw ConfigError("rnn needs at least one layer");
  if (!(cfg.dropout >= 0.0) || cfg.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

// Deterministic per-parameter init streams, stable under config changes that
// do not reorder parameter creation.
class ParamBuilder {
 public:
  ParamBuilder(std::vector<nn::Parameter>& params, std::unordered_map<std::string, std::size_t>& index,
               std::uint64_t seed)
      : params_(params), index_(index), root_(seed) {}

  void weight(const std::string& name, int rows, int cols) {
    RngState rng = root_.fork(counter_++);
    push(name, nn::xavier_init({rows, cols}, rng));
  }
  void bias(const std::string& name, int n) {
    ++counter_;
    push(name, Tensor::zeros({n}));
  }
  void gain(const std::string& name, int n) {
    ++counter_;
    push(name, Tensor::full({n}, 1.0));
  }
  void attention(const std::string& prefix, int d) {
    weight(prefix + ".wq", d, d);
    bias(prefix + ".bq", d);
    weight(prefix + ".wk", d, d);
    bias(prefix + ".bk", d);
    weight(prefix + ".wv", d, d);
    bias(prefix + ".bv", d);
    weight(prefix + ".wo", d, d);
    bias(prefix + ".bo", d);
  }
  void norm(const std::string& prefix, int d) {
    gain(prefix + ".g", d);
    bias(prefix + ".b", d);
  }

 private:
  void push(const std::string& name, Tensor t) {
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(t));
  }

  std::vector<nn::Parameter>& params_;
  std::unordered_map<std::string, std::size_t>& index_;
  RngState root_;
  std::uint64_t counter_ = 0;
};

Tensor lift_rank2(const Tensor& x) {
  // (T, C) -> (1, T, C). Rebuilt outside the graph; training paths pass
  // rank-3 input, so nothing differentiable is lost here.
  return Tensor::from({1, x.dim(0), x.dim(1)}, x.values());
}

Tensor squeeze_rank3(const Tensor& x) {
  return Tensor::from({x.dim(1), x.dim(2)}, x.values());
}

}  // namespace

TransformerModel::TransformerModel(const TransformerConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  check_transformer_config(cfg_);
  ParamBuilder b(params_, index_, init_seed);
  const int d = cfg_.d_model;
  const int f = cfg_.dim_feedforward;
  for (int i = 0; i < cfg_.num_encoder_layers; ++i) {
    const std::string prefix = "enc" + std::to_string(i);
    b.attention(prefix + ".attn", d);
    b.norm(prefix + ".norm1", d);
    b.weight(prefix + ".ff.w1", d, f);
    b.bias(prefix + ".ff.b1", f);
    b.weight(prefix + ".ff.w2", f, d);
    b.bias(prefix + ".ff.b2", d);
    b.norm(prefix + ".norm2", d);
  }
  b.norm("enc_norm", d);
  for (int i = 0; i < cfg_.num_decoder_layers; ++i) {
    const std::string prefix = "dec" + std::to_string(i);
    b.attention(prefix + ".self", d);
    b.norm(prefix + ".norm1", d);
    b.attention(prefix + ".cross", d);
    b.norm(prefix + ".norm2", d);
    b.weight(prefix + ".ff.w1", d, f);
    b.bias(prefix + ".ff.b1", f);
    b.weight(prefix + ".ff.w2", f, d);
    b.bias(prefix + ".ff.b2", d);
    b.norm(prefix + ".norm3", d);
  }
  b.norm("dec_norm", d);
  b.weight("fc.w", d, cfg_.num_classes);
  b.bias("fc.b", cfg_.num_classes);
}

Tensor& TransformerModel::p(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter " + name);
  return params_[it->second].tensor;
}

Tensor TransformerModel::add_positional(const Tensor& x) {
  if (!cfg_.positional_encoding) return x;
  const int t_len = x.dim(1);
  const int d = cfg_.d_model;
  auto it = pe_cache_.find(t_len);
  if (it == pe_cache_.end()) {
    std::vector<double> table(static_cast<std::size_t>(t_len) * d, 0.0);
    for (int t = 0; t < t_len; ++t)
      for (int i = 0; i < d; i += 2) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / d);
        const double angle = static_cast<double>(t) * freq;
        table[static_cast<std::size_t>(t) * d + i] = std::sin(angle);
        if (i + 1 < d) table[static_cast<std::size_t>(t) * d + i + 1] = std::cos(angle);
      }
    it = pe_cache_.emplace(t_len, std::move(table)).first;
  }
  Tensor pe = Tensor::from({t_len, d}, it->second);
  return nn::add(x, pe);
}

Tensor TransformerModel::drop(const Tensor& x, bool training, RngState* rng) const {
  if (!training || cfg_.dropout == 0.0) return x;
  if (rng == nullptr) throw InvalidArgumentError("training-mode dropout needs an rng");
  return nn::dropout(x, cfg_.dropout, *rng, true);
}

Tensor TransformerModel::attn_block(const Tensor& q_in, const Tensor& kv_in, const std::string& prefix,
                                    bool causal, bool training, RngState* rng) {
  (void)training;
  (void)rng;
  Tensor q = nn::linear(q_in, p(prefix + ".wq"), p(prefix + ".bq"));
  Tensor k = nn::linear(kv_in, p(prefix + ".wk"), p(prefix + ".bk"));
  Tensor v = nn::linear(kv_in, p(prefix + ".wv"), p(prefix + ".bv"));
  return nn::multi_head_attention(q, k, v, cfg_.num_heads, p(prefix + ".wo"), p(prefix + ".bo"), causal);
}

Tensor TransformerModel::ff_block(const Tensor& x, const std::string& prefix, bool training,
                                  RngState* rng) {
  Tensor h = nn::relu(nn::linear(x, p(prefix + ".w1"), p(prefix + ".b1")));
  h = drop(h, training, rng);
  return nn::linear(h, p(prefix + ".w2"), p(prefix + ".b2"));
}

Tensor TransformerModel::run_encoder(const Tensor& x, bool training, RngState* rng) {
  Tensor h = x;
  for (int i = 0; i < cfg_.num_encoder_layers; ++i) {
    const std::string prefix = "enc" + std::to_string(i);
    Tensor sa = attn_block(h, h, prefix + ".attn", false, training, rng);
    h = nn::layer_norm(nn::add(h, drop(sa, training, rng)), p(prefix + ".norm1.g"),
                       p(prefix + ".norm1.b"));
    Tensor ff = ff_block(h, prefix + ".ff", training, rng);
    h = nn::layer_norm(nn::add(h, drop(ff, training, rng)), p(prefix + ".norm2.g"),
                       p(prefix + ".norm2.b"));
  }
  return nn::layer_norm(h, p("enc_norm.g"), p("enc_norm.b"));
}

Tensor TransformerModel::encode(const Tensor& x, bool training, RngState* rng) {
  const bool rank2 = x.rank() == 2;
  Tensor in = rank2 ? lift_rank2(x) : x;
  if (in.rank() != 3 || in.dim(2) != cfg_.d_model)
    throw ShapeError("transformer wants (B, T, " + std::to_string(cfg_.d_model) + ") input, got " +
                     nn::shape_str(x.shape()));
  Tensor out = run_encoder(add_positional(in), training, rng);
  return rank2 ? squeeze_rank3(out) : out;
}

Tensor TransformerModel::forward(const Tensor& x, bool training, RngState* rng) {
  const bool rank2 = x.rank() == 2;
  Tensor in = rank2 ? lift_rank2(x) : x;
  if (in.rank() != 3 || in.dim(2) != cfg_.d_model)
    throw ShapeError("transformer wants (B, T, " + std::to_string(cfg_.d_model) + ") input, got " +
                     nn::shape_str(x.shape()));

  Tensor src = add_positional(in);
  Tensor memory = run_encoder(src, training, rng);

  // The decoder reads the same embedded sequence it classifies.
  Tensor y = src;
  for (int i = 0; i < cfg_.num_decoder_layers; ++i) {
    const std::string prefix = "dec" + std::to_string(i);
    Tensor sa = attn_block(y, y, prefix + ".self", true, training, rng);
    y = nn::layer_norm(nn::add(y, drop(sa, training, rng)), p(prefix + ".norm1.g"),
                       p(prefix + ".norm1.b"));
    Tensor ca = attn_block(y, memory, prefix + ".cross", false, training, rng);
    y = nn::layer_norm(nn::add(y, drop(ca, training, rng)), p(prefix + ".norm2.g"),
                       p(prefix + ".norm2.b"));
    Tensor ff = ff_block(y, prefix + ".ff", training, rng);
    y = nn::layer_norm(nn::add(y, drop(ff, training, rng)), p(prefix + ".norm3.g"),
                       p(prefix + ".norm3.b"));
  }
  y = nn::layer_norm(y, p("dec_norm.g"), p("dec_norm.b"));
  Tensor logits = nn::linear(y, p("fc.w"), p("fc.b"));
  return rank2 ? squeeze_rank3(logits) : logits;
}

ModelSpec TransformerModel::spec() const {
  ModelSpec s;
  s.kind = "transformer";
  s.transformer = cfg_;
  return s;
}

RnnModel::RnnModel(const RnnConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  check_rnn_config(cfg_);
  ParamBuilder b(params_, index_, init_seed);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string prefix = "l" + std::to_string(l);
    const int in = l == 0 ? cfg_.input_dim : cfg_.hidden_dim;
    b.weight(prefix + ".wx", in, cfg_.hidden_dim);
    b.weight(prefix + ".wh", cfg_.hidden_dim, cfg_.hidden_dim);
    b.bias(prefix + ".b", cfg_.hidden_dim);
  }
  b.weight("fc.w", cfg_.hidden_dim, cfg_.num_classes);
  b.bias("fc.b", cfg_.num_classes);
}

Tensor& RnnModel::p(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter " + name);
  return params_[it->second].tensor;
}

Tensor RnnModel::forward(const Tensor& x, bool training, RngState* rng) {
  const bool rank2 = x.rank() == 2;
  Tensor h = rank2 ? lift_rank2(x) : x;
  if (h.rank() != 3 || h.dim(2) != cfg_.input_dim)
    throw ShapeError("rnn wants (B, T, " + std::to_string(cfg_.input_dim) + ") input, got " +
                     nn::shape_str(x.shape()));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string prefix = "l" + std::to_string(l);
    h = nn::rnn_layer(h, p(prefix + ".wx"), p(prefix + ".wh"), p(prefix + ".b"));
    if (training && cfg_.dropout > 0.0 && l + 1 < cfg_.num_layers) {
      if (rng == nullptr) throw InvalidArgumentError("training-mode dropout needs an rng");
      h = nn::dropout(h, cfg_.dropout, *rng, true);
    }
  }
  Tensor logits = nn::linear(h, p("fc.w"), p("fc.b"));
  return rank2 ? squeeze_rank3(logits) : logits;
}

ModelSpec RnnModel::spec() const {
  ModelSpec s;
  s.kind = "rnn";
  s.rnn = cfg_;
  return s;
}

std::unique_ptr<SequenceClassifier> make_model(const ModelSpec& spec, std::uint64_t init_seed) {
  if (spec.kind == "transformer") return std::make_unique<TransformerModel>(spec.transformer, init_seed);
  if (spec.kind == "rnn") return std::make_unique<RnnModel>(spec.rnn, init_seed);
  throw ConfigError("unknown model kind '" + spec.kind + "' (expected transformer or rnn)");
}

std::int64_t transformer_parameter_count(const TransformerConfig& cfg) {
  const std::int64_t d = cfg.d_model;
  const std::int64_t f = cfg.dim_feedforward;
  const std::int64_t attn = 4 * (d * d + d);
  const std::int64_t ff = d * f + f + f * d + d;
  const std::int64_t norm = 2 * d;
  const std::int64_t enc_layer = attn + ff + 2 * norm;
  const std::int64_t dec_layer = 2 * attn + ff + 3 * norm;
  return cfg.num_encoder_layers * enc_layer + cfg.num_decoder_layers * dec_layer + 2 * norm +
         d * cfg.num_classes + cfg.num_classes;
}

std::int64_t rnn_parameter_count(const RnnConfig& cfg) {
  const std::int64_t h = cfg.hidden_dim;
  std::int64_t total = 0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::int64_t in = l == 0 ? cfg.input_dim : h;
    total += in * h + h * h + h;
  }
  return total + h * cfg.num_classes + cfg.num_classes;
}

PredictionTrace trace_from_logits(const Tensor& logits) {
  int rows = 0, classes = 0;
  if (logits.rank() == 2) {
    rows = logits.dim(0);
    classes = logits.dim(1);
  } else if (logits.rank() == 3 && logits.dim(0) == 1) {
    rows = logits.dim(1);
    classes = logits.dim(2);
  } else {
    throw ShapeError("trace wants (T, C) or (1, T, C) logits, got " + nn::shape_str(logits.shape()));
  }
  if (rows < 1 || classes < 2) throw ShapeError("trace needs at least one row and two classes");

  PredictionTrace trace;
  trace.classes = classes;
  trace.probs.resize(static_cast<std::size_t>(rows) * classes);
  trace.steps.resize(static_cast<std::size_t>(rows));
  const auto& vals = logits.values();
  for (int t = 0; t < rows; ++t) {
    const double* row = vals.data() + static_cast<std::size_t>(t) * classes;
    double hi = row[0];
    int arg = 0;
    for (int c = 1; c < classes; ++c)
      if (row[c] > hi) {
        hi = row[c];
        arg = c;
      }
    double z = 0.0;
    double* out = trace.probs.data() + static_cast<std::size_t>(t) * classes;
    for (int c = 0; c < classes; ++c) {
      out[c] = std::exp(row[c] - hi);
      z += out[c];
    }
    for (int c = 0; c < classes; ++c) out[c] /= z;
    trace.steps[static_cast<std::size_t>(t)] = arg;
  }
  return trace;
}

AggregationRule aggregation_from_string(const std::string& s) {
  if (s == "last_step") return AggregationRule::kLastStep;
  if (s == "majority") return AggregationRule::kMajority;
  if (s == "first_persistent") return AggregationRule::kFirstPersistent;
  throw ConfigError("unknown aggregation rule '" + s + "'");
}

std::string to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::kLastStep: return "last_step";
    case AggregationRule::kMajority: return "majority";
    case AggregationRule::kFirstPersistent: return "first_persistent";
  }
  throw ConfigError("unknown aggregation rule");
}

int aggregate_prediction(const PredictionTrace& trace, AggregationRule rule, int persistence) {
  if (trace.steps.empty()) throw InvalidArgumentError("cannot aggregate an empty trace");
  switch (rule) {
    case AggregationRule::kLastStep:
      return trace.steps.back();
    case AggregationRule::kMajority: {
      std::vector<std::size_t> counts(static_cast<std::size_t>(trace.classes), 0);
      for (int s : trace.steps) counts[static_cast<std::size_t>(s)] += 1;
      int best = 0;
      for (int c = 1; c < trace.classes; ++c)
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
      return best;
    }
    case AggregationRule::kFirstPersistent: {
      if (persistence < 1) throw ConfigError("persistence must be at least 1");
      int run_class = -1;
      int run_len = 0;
      for (int s : trace.steps) {
        if (s == run_class) {
          ++run_len;
        } else {
          run_class = s;
          run_len = 1;
        }
        if (run_class != 0 && run_len >= persistence) return run_class;
      }
      return 0;
    }
  }
  throw ConfigError("unknown aggregation rule");
}

LatencyResult detection_latency(const PredictionTrace& trace, std::size_t onset_step, int true_class,
                                int persistence) {
  if (trace.steps.empty()) throw InvalidArgumentError("cannot score an empty trace");
  if (persistence < 1) throw ConfigError("persistence must be at least 1");
  if (true_class <= 0 || true_class >= trace.classes)
    throw InvalidArgumentError("true_class " + std::to_string(true_class) + " is not a fault class");

  LatencyResult res;
  int run_len = 0;
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    run_len = trace.steps[t] == true_class ? run_len + 1 : 0;
    if (run_len >= persistence) {
      res.fire_step = static_cast<std::int64_t>(t);
      res.latency_steps = res.fire_step - static_cast<std::int64_t>(onset_step);
      res.status = res.fire_step < static_cast<std::int64_t>(onset_step) ? DetectionStatus::kFalseEarly
                                                                         : DetectionStatus::kDetected;
      return res;
    }
  }
  return res;  // kNotDetected
}

PredictionTrace causal_trace(SequenceClassifier& model, const Normalizer& norm,
                             const std::vector<double>& frame, std::size_t rows, int channels,
                             int window_len, std::size_t batch_windows) {
  if (window_len < 1) throw InvalidArgumentError("window_len must be positive");
  if (batch_windows < 1) throw InvalidArgumentError("batch_windows must be positive");
  if (rows < 1) throw InvalidArgumentError("frame has no rows");
  if (frame.size() != rows * static_cast<std::size_t>(channels))
    throw ShapeError("frame buffer does not match rows x channels");

  nn::NoGradGuard guard;
  const std::size_t c = static_cast<std::size_t>(channels);
  PredictionTrace trace;
  std::vector<int> all_steps;
  std::vector<double> all_probs;
  int classes = 0;

  auto take_last_rows = [&](const Tensor& logits, int t_len, std::size_t batch) {
    PredictionTrace part = trace_from_logits(
        Tensor::from({1, static_cast<int>(batch) * t_len, logits.dim(2)}, logits.values()));
    classes = part.classes;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * static_cast<std::size_t>(t_len) + static_cast<std::size_t>(t_len) - 1;
      all_steps.push_back(part.steps[row]);
      for (int k = 0; k < classes; ++k)
        all_probs.push_back(part.probs[row * static_cast<std::size_t>(classes) + k]);
    }
  };

  // warm-up rows with less than a full window of history
  const std::size_t warm = std::min(rows, static_cast<std::size_t>(window_len - 1));
  for (std::size_t t = 0; t < warm; ++t) {
    const int t_len = static_cast<int>(t) + 1;
    Tensor x = Tensor::from({1, t_len, channels},
                            std::vector<double>(frame.begin(), frame.begin() + (t + 1) * c));
    norm.apply(x);
    take_last_rows(model.forward(x, false, nullptr), t_len, 1);
  }

  // full windows, batched
  std::vector<std::size_t> starts;
  for (std::size_t t = warm; t < rows; ++t) starts.push_back(t + 1 - static_cast<std::size_t>(window_len));
  for (std::size_t pos = 0; pos < starts.size(); pos += batch_windows) {
    const std::size_t batch = std::min(batch_windows, starts.size() - pos);
    std::vector<double> buf(batch * static_cast<std::size_t>(window_len) * c);
    for (std::size_t b = 0; b < batch; ++b)
      std::memcpy(buf.data() + b * static_cast<std::size_t>(window_len) * c,
                  frame.data() + starts[pos + b] * c,
                  static_cast<std::size_t>(window_len) * c * sizeof(double));
    Tensor x = Tensor::from({static_cast<int>(batch), window_len, channels}, std::move(buf));
    norm.apply(x);
    take_last_rows(model.forward(x, false, nullptr), window_len, batch);
  }

  trace.classes = classes;
  trace.steps = std::move(all_steps);
  trace.probs = std::move(all_probs);
  return trace;
}

}  // namespace enginefault
