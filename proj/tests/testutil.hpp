#pragma once

// Shared helpers for the test suites: finite-difference gradient checking and
// naive reference implementations kept deliberately independent of the ops in
// src/ (plain loops, no shared kernels).

#include <cmath>
#include <functional>
#include <vector>

#include "enginefault/rng.hpp"
#include "enginefault/tensor.hpp"

namespace eftest {

using enginefault::RngState;
namespace nn = enginefault::nn;

// Central finite difference of f at coordinate idx of t.
template <typename LossFn>
double fd_derivative(LossFn&& f, nn::Tensor t, std::size_t idx, double h) {
  double& slot = t.values()[idx];
  const double orig = slot;
  slot = orig + h;
  const double fp = f();
  slot = orig - h;
  const double fm = f();
  slot = orig;
  return (fp - fm) / (2.0 * h);
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
};

// Checks analytic gradients of `tensors` against central differences of the
// scalar `forward()`; `forward` must be a pure function of the tensor values.
// Samples up to `coords_per_tensor` coordinates per tensor. Relative error
// uses a small absolute floor so near-zero gradients are compared absolutely.
template <typename LossFn>
GradCheckReport grad_check(LossFn&& forward, std::vector<nn::Tensor> tensors,
                           int coords_per_tensor, RngState& rng, double h = 1e-4,
                           double floor = 1e-6) {
  for (auto& t : tensors) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  nn::Tensor loss = forward();
  nn::backward(loss);

  auto eval = [&]() {
    nn::NoGradGuard ng;
    return forward().item();
  };

  GradCheckReport rep;
  for (auto& t : tensors) {
    const std::size_t n = t.values().size();
    std::vector<std::size_t> idxs;
    if (n <= static_cast<std::size_t>(coords_per_tensor)) {
      for (std::size_t i = 0; i < n; ++i) idxs.push_back(i);
    } else {
      for (int c = 0; c < coords_per_tensor; ++c) idxs.push_back(rng.uniform_int(n));
    }
    for (std::size_t idx : idxs) {
      const double fd = fd_derivative(eval, t, idx, h);
      const double ad = t.grad()[idx];
      const double denom = std::max({std::fabs(fd), std::fabs(ad), floor});
      const double rel = std::fabs(fd - ad) / denom;
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      ++rep.coords_checked;
    }
  }
  return rep;
}

// --- Naive reference implementations (loop-based oracles) -----------------

// Softmax of one row computed in extended precision.
inline std::vector<double> softmax_row_oracle(const std::vector<double>& z) {
  long double mx = z[0];
  for (double v : z) mx = std::max<long double>(mx, v);
  long double total = 0.0L;
  std::vector<long double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = expl(static_cast<long double>(z[i]) - mx);
    total += e[i];
  }
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(e[i] / total);
  return out;
}

// Mean cross-entropy over rows, extended precision, direct formula.
inline double cross_entropy_oracle(const std::vector<double>& logits, int rows, int classes,
                                   const std::vector<int>& targets) {
  long double total = 0.0L;
  for (int r = 0; r < rows; ++r) {
    long double mx = logits[static_cast<std::size_t>(r) * classes];
    for (int j = 1; j < classes; ++j)
      mx = std::max<long double>(mx, logits[static_cast<std::size_t>(r) * classes + j]);
    long double lse = 0.0L;
    for (int j = 0; j < classes; ++j)
      lse += expl(static_cast<long double>(logits[static_cast<std::size_t>(r) * classes + j]) - mx);
    lse = mx + logl(lse);
    total += lse - logits[static_cast<std::size_t>(r) * classes + targets[static_cast<std::size_t>(r)]];
  }
  return static_cast<double>(total / rows);
}

// Naive multi-head attention: per-head score loops + softmax + weighted sum,
// heads concatenated, then the output projection applied row by row.
// q, k, v: (B, T, D) row-major; w_o: (D, D); b_o: (D).
inline std::vector<double> mha_oracle(const std::vector<double>& q, const std::vector<double>& k,
                                      const std::vector<double>& v, int b, int tq, int tk, int d,
                                      int heads, bool causal, const std::vector<double>& w_o,
                                      const std::vector<double>& b_o) {
  const int dh = d / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> concat(static_cast<std::size_t>(b) * tq * d, 0.0);
  for (int bi = 0; bi < b; ++bi) {
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < tq; ++i) {
        std::vector<double> row(tk);
        for (int j = 0; j < tk; ++j) {
          double s = 0.0;
          for (int e = 0; e < dh; ++e)
            s += q[(static_cast<std::size_t>(bi) * tq + i) * d + h * dh + e] *
                 k[(static_cast<std::size_t>(bi) * tk + j) * d + h * dh + e];
          row[j] = s * scl;
          if (causal && j > i) row[j] = -1e300;
        }
        std::vector<double> p = softmax_row_oracle(row);
        for (int e = 0; e < dh; ++e) {
          double acc = 0.0;
          for (int j = 0; j < tk; ++j)
            acc += p[j] * v[(static_cast<std::size_t>(bi) * tk + j) * d + h * dh + e];
          concat[(static_cast<std::size_t>(bi) * tq + i) * d + h * dh + e] = acc;
        }
      }
    }
  }
  std::vector<double> out(static_cast<std::size_t>(b) * tq * d, 0.0);
  for (int r = 0; r < b * tq; ++r) {
    for (int jo = 0; jo < d; ++jo) {
      double acc = b_o[static_cast<std::size_t>(jo)];
      for (int e = 0; e < d; ++e)
        acc += concat[static_cast<std::size_t>(r) * d + e] * w_o[static_cast<std::size_t>(e) * d + jo];
      out[static_cast<std::size_t>(r) * d + jo] = acc;
    }
  }
  return out;
}

inline std::vector<double> random_vec(std::size_t n, RngState& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace eftest
