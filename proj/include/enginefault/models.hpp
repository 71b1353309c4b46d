#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "enginefault/dataset.hpp"
#include "enginefault/optim.hpp"
#include "enginefault/rng.hpp"
#include "enginefault/series.hpp"
#include "enginefault/tensor.hpp"

namespace enginefault {

struct TransformerConfig {
  int d_model = kMergedChannels;
  int num_heads = 9;
  int num_encoder_layers = 2;
  int num_decoder_layers = 2;
  int dim_feedforward = 64;
  double dropout = 0.1;
  bool positional_encoding = true;
  int num_classes = kNumClasses;
};

struct RnnConfig {
  int input_dim = kMergedChannels;
  int hidden_dim = 512;
  int num_layers = 10;
  double dropout = 0.0;
  int num_classes = kNumClasses;
};

struct ModelSpec {
  std::string kind = "transformer";  // "transformer" | "rnn"
  TransformerConfig transformer;
  RnnConfig rnn;
};

// Per-channel z-score fitted on training windows. Standardized values are
// clamped so a single wild cell cannot blow up an activation.
struct Normalizer {
  static constexpr double kClamp = 25.0;
  std::vector<double> mean, stdev;

  static Normalizer fit(const LabeledWindowSet& set, const std::vector<std::size_t>& indices);
  // x has channel as its last dimension; values are replaced in place.
  void apply(nn::Tensor& x) const;
};

// Sequence-to-sequence classifier interface: (B, T, C) -> per-step logits
// (B, T, classes). Rank-2 input (T, C) is accepted and returns (T, classes).
class SequenceClassifier {
 public:
  virtual ~SequenceClassifier() = default;
  virtual nn::Tensor forward(const nn::Tensor& x, bool training, RngState* dropout_rng) = 0;
  virtual std::vector<nn::Parameter>& parameters() = 0;
  virtual ModelSpec spec() const = 0;
  std::string kind() const { return spec().kind; }
};

// Encoder-decoder transformer over the merged channel frame. The decoder is
// conditioned on the same input sequence it classifies; its self-attention is
// causally masked, the encoder and the cross-attention are not.
class TransformerModel : public SequenceClassifier {
 public:
  TransformerModel(const TransformerConfig& cfg, std::uint64_t init_seed);

  nn::Tensor forward(const nn::Tensor& x, bool training, RngState* dropout_rng) override;
  // Encoder stack output alone, for representation probes.
  nn::Tensor encode(const nn::Tensor& x, bool training, RngState* dropout_rng);
  std::vector<nn::Parameter>& parameters() override { return params_; }
  ModelSpec spec() const override;
  const TransformerConfig& config() const { return cfg_; }

 private:
  nn::Tensor& p(const std::string& name);
  nn::Tensor add_positional(const nn::Tensor& x);
  nn::Tensor drop(const nn::Tensor& x, bool training, RngState* rng) const;
  nn::Tensor attn_block(const nn::Tensor& q_in, const nn::Tensor& kv_in, const std::string& prefix,
                        bool causal, bool training, RngState* rng);
  nn::Tensor ff_block(const nn::Tensor& x, const std::string& prefix, bool training, RngState* rng);
  nn::Tensor run_encoder(const nn::Tensor& x, bool training, RngState* rng);

  TransformerConfig cfg_;
  std::vector<nn::Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<int, std::vector<double>> pe_cache_;  // rows T -> T*d_model table
};

// Stacked tanh RNN baseline: each layer consumes the full output sequence of
// the previous one, final affine maps the top hidden sequence to classes.
class RnnModel : public SequenceClassifier {
 public:
  RnnModel(const RnnConfig& cfg, std::uint64_t init_seed);

  nn::Tensor forward(const nn::Tensor& x, bool training, RngState* dropout_rng) override;
  std::vector<nn::Parameter>& parameters() override { return params_; }
  ModelSpec spec() const override;
  const RnnConfig& config() const { return cfg_; }

 private:
  nn::Tensor& p(const std::string& name);

  RnnConfig cfg_;
  std::vector<nn::Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::unique_ptr<SequenceClassifier> make_model(const ModelSpec& spec, std::uint64_t init_seed);

// Closed-form parameter counts, asserted against the instantiated models.
std::int64_t transformer_parameter_count(const TransformerConfig& cfg);
std::int64_t rnn_parameter_count(const RnnConfig& cfg);

// Per-step class probabilities and argmax decisions for one sequence.
struct PredictionTrace {
  int classes = 0;
  std::vector<double> probs;  // rows() * classes, softmax rows
  std::vector<int> steps;     // argmax per step

  std::size_t rows() const { return steps.size(); }
};

// logits: (T, classes) or (1, T, classes).
PredictionTrace trace_from_logits(const nn::Tensor& logits);

enum class AggregationRule { kLastStep, kMajority, kFirstPersistent };

AggregationRule aggregation_from_string(const std::string& s);
std::string to_string(AggregationRule rule);

// Collapses a per-step trace to one verdict. kFirstPersistent returns the
// first nonzero class held for `persistence` consecutive steps, else 0;
// kMajority breaks ties toward the smaller class id.
int aggregate_prediction(const PredictionTrace& trace, AggregationRule rule, int persistence = 3);

enum class DetectionStatus { kDetected, kFalseEarly, kNotDetected };

struct LatencyResult {
  DetectionStatus status = DetectionStatus::kNotDetected;
  // fire_step: last step of the first `persistence`-long run of the true
  // class, i.e. the moment an online monitor could raise the alarm.
  std::int64_t fire_step = -1;
  std::int64_t latency_steps = 0;  // fire_step - onset_step when fired
};

LatencyResult detection_latency(const PredictionTrace& trace, std::size_t onset_step,
                                int true_class, int persistence = 3);

// Strictly causal per-step verdicts for a full frame: the row-t verdict is the
// last-step output of a forward pass over rows [max(0, t-window_len+1), t].
// frame is rows x channels row-major. Runs under NoGradGuard in eval mode.
PredictionTrace causal_trace(SequenceClassifier& model, const Normalizer& norm,
                             const std::vector<double>& frame, std::size_t rows, int channels,
                             int window_len, std::size_t batch_windows = 32);

}  // namespace enginefault
