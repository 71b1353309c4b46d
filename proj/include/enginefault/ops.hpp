#pragma once

#include <optional>
#include <vector>

#include "enginefault/rng.hpp"
#include "enginefault/tensor.hpp"

namespace enginefault::nn {

// Elementwise. `b` may either match `a`'s shape exactly or be a suffix of it
// (e.g. (D) added to every row of (N, D), or (T, D) added to every batch of
// (B, T, D)).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// C = A @ B for 2-D operands (N, K) x (K, M).
Tensor matmul(const Tensor& a, const Tensor& b);

// y = x @ w (+ bias). x may have any rank >= 1 as long as its last dimension
// equals w's first; leading dimensions are treated as a flat row index.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

Tensor relu(const Tensor& x);
Tensor tanh_act(const Tensor& x);

// Numerically stable softmax along `axis` (negative counts from the end).
Tensor softmax(const Tensor& x, int axis = -1);

// Normalizes the last dimension to zero mean / unit variance, then applies
// the per-feature affine (gain, bias).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Training mode zeroes each element with probability p and rescales survivors
// by 1/(1-p); eval mode is the identity. Draws from `rng`.
Tensor dropout(const Tensor& x, double p, RngState& rng, bool training);

// Mean over all samples of -log softmax(logits)[target]. Logits may be (N, C)
// or (B, T, C) flattened to B*T rows; targets.size() must equal the row count.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Scaled dot-product attention over heads. q: (B, Tq, D); k, v: (B, Tk, D);
// D % num_heads == 0. Per head: softmax(Qh Kh^T / sqrt(Dh)) Vh, heads
// concatenated back to (B, Tq, D). `causal` masks key positions j > i
// (requires Tq == Tk). When `weights_out` is given the forward pass stores
// the attention probabilities as (B, H, Tq, Tk) row-major.
Tensor attention_heads(const Tensor& q, const Tensor& k, const Tensor& v, int num_heads,
                       bool causal, std::vector<double>* weights_out = nullptr);

// Full multi-head attention: attention_heads followed by the output
// projection w_o (D, D) + b_o.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, int num_heads,
                            const Tensor& w_o, const Tensor& b_o, bool causal,
                            std::vector<double>* weights_out = nullptr);

// One stacked-RNN layer: h_t = tanh(x_t Wx + h_{t-1} Wh + b), h_{-1} = 0.
// x: (B, T, Din), wx: (Din, H), wh: (H, H), b: (H) -> (B, T, H).
// Forward loop and backpropagation-through-time are fused into one node.
Tensor rnn_layer(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Xavier/Glorot uniform init for a (fan_in, fan_out) weight; 1-D shapes use
// fan_in = fan_out = n.
Tensor xavier_init(const std::vector<int>& shape, RngState& rng, bool requires_grad = true);

}  // namespace enginefault::nn
