#include "enginefault/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "enginefault/matmul_kernel.hpp"

namespace enginefault::nn {

namespace {

using detail::Node;

Tensor make_op(std::vector<int> shape, std::vector<double> val,
               std::initializer_list<Tensor> parents, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->val = std::move(val);
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents)
      if (p.defined() && p.node()->requires_grad) track = true;
  }
  if (track) {
    node->requires_grad = true;
    for (const Tensor& p : parents)
      if (p.defined()) node->parents.push_back(p.node());
    node->backward = std::move(bw);
  }
  return Tensor::wrap(node);
}

bool wants_grad(const Tensor& t) { return t.defined() && t.node()->requires_grad; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// True when small is a suffix of big (broadcast over leading dims).
bool is_suffix(const std::vector<int>& big, const std::vector<int>& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.values());
    const double* bp = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bp[i];
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](Node& n) {
      if (wants_grad(a)) {
        auto& ga = a.node()->grad;
        a.node()->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
      }
      if (wants_grad(b)) {
        b.node()->ensure_grad();
        auto& gb = b.node()->grad;
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i];
      }
    });
  }
  if (!is_suffix(a.shape(), b.shape()))
    throw ShapeError("add: " + shape_str(b.shape()) + " is not a suffix of " +
                     shape_str(a.shape()));
  const std::int64_t bn = b.size();
  std::vector<double> out(a.values());
  const double* bp = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bp[i % bn];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b, bn](Node& n) {
    if (wants_grad(a)) {
      a.node()->ensure_grad();
      auto& ga = a.node()->grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    }
    if (wants_grad(b)) {
      b.node()->ensure_grad();
      auto& gb = b.node()->grad;
      for (std::size_t i = 0; i < n.grad.size(); ++i) gb[i % bn] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const double* bp = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bp[i];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](Node& n) {
    if (wants_grad(a)) {
      a.node()->ensure_grad();
      auto& ga = a.node()->grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    }
    if (wants_grad(b)) {
      b.node()->ensure_grad();
      auto& gb = b.node()->grad;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const double* bp = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
  return make_op(a.shape(), std::move(out), {a, b}, [a, b](Node& n) {
    if (wants_grad(a)) {
      a.node()->ensure_grad();
      auto& ga = a.node()->grad;
      const double* bv = b.data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * bv[i];
    }
    if (wants_grad(b)) {
      b.node()->ensure_grad();
      auto& gb = b.node()->grad;
      const double* av = a.data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  return make_op(a.shape(), std::move(out), {a}, [a, c](Node& n) {
    if (!wants_grad(a)) return;
    a.node()->ensure_grad();
    auto& ga = a.node()->grad;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * c;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v += c;
  return make_op(a.shape(), std::move(out), {a}, [a](Node& n) {
    if (!wants_grad(a)) return;
    a.node()->ensure_grad();
    auto& ga = a.node()->grad;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int nrow = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dims disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(nrow) * m);
  gemm(false, false, nrow, m, k, 1.0, a.data(), k, b.data(), m, 0.0, out.data(), m);
  return make_op({nrow, m}, std::move(out), {a, b}, [a, b, nrow, k, m](Node& n) {
    if (wants_grad(a)) {
      a.node()->ensure_grad();
      gemm(false, true, nrow, k, m, 1.0, n.grad.data(), m, b.data(), m, 1.0,
           a.node()->grad.data(), k);
    }
    if (wants_grad(b)) {
      b.node()->ensure_grad();
      gemm(true, false, k, m, nrow, 1.0, a.data(), k, n.grad.data(), m, 1.0,
           b.node()->grad.data(), m);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be 2-D, got " + shape_str(w.shape()));
  if (x.rank() < 1) throw ShapeError("linear: input must have rank >= 1");
  const int din = w.dim(0), dout = w.dim(1);
  if (x.shape().back() != din)
    throw ShapeError("linear: input last dim " + std::to_string(x.shape().back()) +
                     " != weight rows " + std::to_string(din));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != dout))
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " != (" +
                     std::to_string(dout) + ")");
  const int rows = static_cast<int>(x.size() / din);
  std::vector<int> out_shape(x.shape());
  out_shape.back() = dout;
  std::vector<double> out(static_cast<std::size_t>(rows) * dout);
  gemm(false, false, rows, dout, din, 1.0, x.data(), din, w.data(), dout, 0.0, out.data(),
       dout);
  if (bias.defined()) {
    const double* bp = bias.data();
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < dout; ++j) out[static_cast<std::size_t>(r) * dout + j] += bp[j];
  }
  return make_op(std::move(out_shape), std::move(out), {x, w, bias},
                 [x, w, bias, rows, din, dout](Node& n) {
                   if (wants_grad(x)) {
                     x.node()->ensure_grad();
                     gemm(false, true, rows, din, dout, 1.0, n.grad.data(), dout, w.data(),
                          dout, 1.0, x.node()->grad.data(), din);
                   }
                   if (wants_grad(w)) {
                     w.node()->ensure_grad();
                     gemm(true, false, din, dout, rows, 1.0, x.data(), din, n.grad.data(),
                          dout, 1.0, w.node()->grad.data(), dout);
                   }
                   if (bias.defined() && wants_grad(bias)) {
                     bias.node()->ensure_grad();
                     auto& gb = bias.node()->grad;
                     for (int r = 0; r < rows; ++r)
                       for (int j = 0; j < dout; ++j)
                         gb[j] += n.grad[static_cast<std::size_t>(r) * dout + j];
                   }
                 });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_op(x.shape(), std::move(out), {x}, [x](Node& n) {
    if (!wants_grad(x)) return;
    x.node()->ensure_grad();
    auto& gx = x.node()->grad;
    const double* xv = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > 0.0) gx[i] += n.grad[i];
  });
}

Tensor tanh_act(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) v = std::tanh(v);
  return make_op(x.shape(), std::move(out), {x}, [x](Node& n) {
    if (!wants_grad(x)) return;
    x.node()->ensure_grad();
    auto& gx = x.node()->grad;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * (1.0 - n.val[i] * n.val[i]);
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw InvalidArgumentError("softmax: axis out of range for shape " + shape_str(x.shape()));
  const int d = x.dim(axis);
  if (d == 0) throw InvalidArgumentError("softmax: empty axis");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);

  std::vector<double> out(x.values());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      double* base = out.data() + o * d * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < d; ++j) mx = std::max(mx, base[j * inner]);
      double total = 0.0;
      for (int j = 0; j < d; ++j) {
        double e = std::exp(base[j * inner] - mx);
        base[j * inner] = e;
        total += e;
      }
      for (int j = 0; j < d; ++j) base[j * inner] /= total;
    }
  }
  return make_op(x.shape(), std::move(out), {x}, [x, d, outer, inner](Node& n) {
    if (!wants_grad(x)) return;
    x.node()->ensure_grad();
    auto& gx = x.node()->grad;
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t off = o * d * inner + in;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += n.grad[off + j * inner] * n.val[off + j * inner];
        for (int j = 0; j < d; ++j)
          gx[off + j * inner] += n.val[off + j * inner] * (n.grad[off + j * inner] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: input must have rank >= 1");
  const int d = x.shape().back();
  if (d < 1) throw ShapeError("layer_norm: normalized axis must have length >= 1");
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw ShapeError("layer_norm: gain/bias must be (" + std::to_string(d) + ")");
  const std::int64_t rows = x.size() / d;

  std::vector<double> out(x.values().size());
  auto xhat = std::make_shared<std::vector<double>>(x.values().size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* xv = x.data();
  const double* gv = gain.data();
  const double* bv = bias.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xv + r * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * is;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = xh * gv[j] + bv[j];
    }
  }
  return make_op(x.shape(), std::move(out), {x, gain, bias},
                 [x, gain, bias, d, rows, xhat, inv_std](Node& n) {
                   const double* gv = gain.data();
                   for (std::int64_t r = 0; r < rows; ++r) {
                     const double* dy = n.grad.data() + r * d;
                     const double* xh = xhat->data() + r * d;
                     if (wants_grad(x)) {
                       x.node()->ensure_grad();
                       double* gx = x.node()->grad.data() + r * d;
                       double m1 = 0.0, m2 = 0.0;
                       for (int j = 0; j < d; ++j) {
                         const double dyg = dy[j] * gv[j];
                         m1 += dyg;
                         m2 += dyg * xh[j];
                       }
                       m1 /= d;
                       m2 /= d;
                       const double is = (*inv_std)[r];
                       for (int j = 0; j < d; ++j)
                         gx[j] += (dy[j] * gv[j] - m1 - xh[j] * m2) * is;
                     }
                     if (wants_grad(gain)) {
                       gain.node()->ensure_grad();
                       double* gg = gain.node()->grad.data();
                       for (int j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
                     }
                     if (wants_grad(bias)) {
                       bias.node()->ensure_grad();
                       double* gb = bias.node()->grad.data();
                       for (int j = 0; j < d; ++j) gb[j] += dy[j];
                     }
                   }
                 });
}

Tensor dropout(const Tensor& x, double p, RngState& rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw InvalidArgumentError("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.values().size());
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform() >= p ? keep_scale : 0.0;
    (*mask)[i] = m;
    out[i] *= m;
  }
  return make_op(x.shape(), std::move(out), {x}, [x, mask](Node& n) {
    if (!wants_grad(x)) return;
    x.node()->ensure_grad();
    auto& gx = x.node()->grad;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * (*mask)[i];
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() < 2) throw ShapeError("cross_entropy: logits must have rank >= 2");
  const int c = logits.shape().back();
  const std::int64_t rows = logits.size() / c;
  if (static_cast<std::int64_t>(targets.size()) != rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  for (int t : targets)
    if (t < 0 || t >= c)
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(c) + ")");

  auto probs = std::make_shared<std::vector<double>>(logits.values().size());
  const double* zv = logits.data();
  double loss = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = zv + r * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (int j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    loss += lse - row[targets[static_cast<std::size_t>(r)]];
    for (int j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(rows);
  auto targets_copy = std::make_shared<std::vector<int>>(targets);
  return make_op({1}, {loss}, {logits}, [logits, probs, targets_copy, rows, c](Node& n) {
    if (!wants_grad(logits)) return;
    logits.node()->ensure_grad();
    auto& gz = logits.node()->grad;
    const double g = n.grad[0] / static_cast<double>(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (int j = 0; j < c; ++j) gz[r * c + j] += g * (*probs)[r * c + j];
      gz[r * c + (*targets_copy)[static_cast<std::size_t>(r)]] -= g;
    }
  });
}

Tensor attention_heads(const Tensor& q, const Tensor& k, const Tensor& v, int num_heads,
                       bool causal, std::vector<double>* weights_out) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
    throw ShapeError("attention_heads: q/k/v must be (B, T, D)");
  const int b = q.dim(0), tq = q.dim(1), d = q.dim(2);
  const int tk = k.dim(1);
  if (k.dim(0) != b || v.dim(0) != b || k.dim(2) != d || v.dim(2) != d || v.dim(1) != tk)
    throw ShapeError("attention_heads: inconsistent q/k/v shapes " + shape_str(q.shape()) +
                     ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  if (num_heads < 1 || d % num_heads != 0)
    throw ConfigError("attention_heads: model dim " + std::to_string(d) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  if (causal && tq != tk)
    throw InvalidArgumentError("attention_heads: causal mask needs Tq == Tk");
  const int dh = d / num_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double neg_inf = -std::numeric_limits<double>::infinity();

  auto probs =
      std::make_shared<std::vector<double>>(static_cast<std::size_t>(b) * num_heads * tq * tk);
  std::vector<double> out(static_cast<std::size_t>(b) * tq * d, 0.0);
  std::vector<double> scores(static_cast<std::size_t>(tq) * tk);

  for (int bi = 0; bi < b; ++bi) {
    for (int h = 0; h < num_heads; ++h) {
      const double* qh = q.data() + (static_cast<std::size_t>(bi) * tq) * d + h * dh;
      const double* kh = k.data() + (static_cast<std::size_t>(bi) * tk) * d + h * dh;
      const double* vh = v.data() + (static_cast<std::size_t>(bi) * tk) * d + h * dh;
      gemm(false, true, tq, tk, dh, att_scale, qh, d, kh, d, 0.0, scores.data(), tk);
      if (causal) {
        for (int i = 0; i < tq; ++i)
          for (int j = i + 1; j < tk; ++j) scores[static_cast<std::size_t>(i) * tk + j] = neg_inf;
      }
      double* p = probs->data() + ((static_cast<std::size_t>(bi) * num_heads + h) * tq) * tk;
      for (int i = 0; i < tq; ++i) {
        const double* srow = scores.data() + static_cast<std::size_t>(i) * tk;
        double* prow = p + static_cast<std::size_t>(i) * tk;
        double mx = neg_inf;
        for (int j = 0; j < tk; ++j) mx = std::max(mx, srow[j]);
        double total = 0.0;
        for (int j = 0; j < tk; ++j) {
          const double e = std::exp(srow[j] - mx);
          prow[j] = e;
          total += e;
        }
        for (int j = 0; j < tk; ++j) prow[j] /= total;
      }
      gemm(false, false, tq, dh, tk, 1.0, p, tk, vh, d, 0.0,
           out.data() + (static_cast<std::size_t>(bi) * tq) * d + h * dh, d);
    }
  }
  if (weights_out) *weights_out = *probs;

  return make_op({b, tq, d}, std::move(out), {q, k, v},
                 [q, k, v, probs, b, tq, tk, d, dh, num_heads, att_scale](Node& n) {
                   const bool gq = wants_grad(q), gk = wants_grad(k), gv = wants_grad(v);
                   if (gq) q.node()->ensure_grad();
                   if (gk) k.node()->ensure_grad();
                   if (gv) v.node()->ensure_grad();
                   std::vector<double> dp(static_cast<std::size_t>(tq) * tk);
                   std::vector<double> ds(static_cast<std::size_t>(tq) * tk);
                   for (int bi = 0; bi < b; ++bi) {
                     for (int h = 0; h < num_heads; ++h) {
                       const std::size_t qoff = (static_cast<std::size_t>(bi) * tq) * d + h * dh;
                       const std::size_t koff = (static_cast<std::size_t>(bi) * tk) * d + h * dh;
                       const double* p =
                           probs->data() +
                           ((static_cast<std::size_t>(bi) * num_heads + h) * tq) * tk;
                       const double* dout = n.grad.data() + qoff;
                       // dP = dO V^T ; dV += P^T dO
                       gemm(false, true, tq, tk, dh, 1.0, dout, d, v.data() + koff, d, 0.0,
                            dp.data(), tk);
                       if (gv)
                         gemm(true, false, tk, dh, tq, 1.0, p, tk, dout, d, 1.0,
                              v.node()->grad.data() + koff, d);
                       // dS = P o (dP - rowsum(dP o P))
                       for (int i = 0; i < tq; ++i) {
                         const double* prow = p + static_cast<std::size_t>(i) * tk;
                         const double* dprow = dp.data() + static_cast<std::size_t>(i) * tk;
                         double* dsrow = ds.data() + static_cast<std::size_t>(i) * tk;
                         double dot = 0.0;
                         for (int j = 0; j < tk; ++j) dot += prow[j] * dprow[j];
                         for (int j = 0; j < tk; ++j) dsrow[j] = prow[j] * (dprow[j] - dot);
                       }
                       if (gq)
                         gemm(false, false, tq, dh, tk, att_scale, ds.data(), tk,
                              k.data() + koff, d, 1.0, q.node()->grad.data() + qoff, d);
                       if (gk)
                         gemm(true, false, tk, dh, tq, att_scale, ds.data(), tk,
                              q.data() + qoff, d, 1.0, k.node()->grad.data() + koff, d);
                     }
                   }
                 });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, int num_heads,
                            const Tensor& w_o, const Tensor& b_o, bool causal,
                            std::vector<double>* weights_out) {
  Tensor heads = attention_heads(q, k, v, num_heads, causal, weights_out);
  return linear(heads, w_o, b_o);
}

Tensor rnn_layer(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b) {
  if (x.rank() != 3) throw ShapeError("rnn_layer: input must be (B, T, Din)");
  const int batch = x.dim(0), t_len = x.dim(1), din = x.dim(2);
  if (wx.rank() != 2 || wx.dim(0) != din)
    throw ShapeError("rnn_layer: wx must be (" + std::to_string(din) + ", H)");
  const int h_dim = wx.dim(1);
  if (wh.rank() != 2 || wh.dim(0) != h_dim || wh.dim(1) != h_dim)
    throw ShapeError("rnn_layer: wh must be (H, H)");
  if (b.rank() != 1 || b.dim(0) != h_dim)
    throw ShapeError("rnn_layer: bias must be (H)");

  const int x_stride = t_len * din;
  const int h_stride = t_len * h_dim;
  std::vector<double> h(static_cast<std::size_t>(batch) * t_len * h_dim);
  std::vector<double> pre(static_cast<std::size_t>(batch) * h_dim);
  const double* bp = b.data();
  for (int t = 0; t < t_len; ++t) {
    gemm(false, false, batch, h_dim, din, 1.0, x.data() + static_cast<std::size_t>(t) * din,
         x_stride, wx.data(), h_dim, 0.0, pre.data(), h_dim);
    if (t > 0)
      gemm(false, false, batch, h_dim, h_dim, 1.0,
           h.data() + static_cast<std::size_t>(t - 1) * h_dim, h_stride, wh.data(), h_dim, 1.0,
           pre.data(), h_dim);
    for (int bi = 0; bi < batch; ++bi) {
      double* hrow = h.data() + static_cast<std::size_t>(bi) * h_stride +
                     static_cast<std::size_t>(t) * h_dim;
      const double* prow = pre.data() + static_cast<std::size_t>(bi) * h_dim;
      for (int j = 0; j < h_dim; ++j) hrow[j] = std::tanh(prow[j] + bp[j]);
    }
  }

  return make_op({batch, t_len, h_dim}, std::move(h), {x, wx, wh, b},
                 [x, wx, wh, b, batch, t_len, din, h_dim, x_stride, h_stride](Node& n) {
                   const bool gx_p = wants_grad(x), gwx = wants_grad(wx), gwh = wants_grad(wh),
                              gb = wants_grad(b);
                   if (gx_p) x.node()->ensure_grad();
                   if (gwx) wx.node()->ensure_grad();
                   if (gwh) wh.node()->ensure_grad();
                   if (gb) b.node()->ensure_grad();
                   std::vector<double> carry(static_cast<std::size_t>(batch) * h_dim, 0.0);
                   std::vector<double> dpre(static_cast<std::size_t>(batch) * h_dim);
                   for (int t = t_len - 1; t >= 0; --t) {
                     for (int bi = 0; bi < batch; ++bi) {
                       const std::size_t hoff = static_cast<std::size_t>(bi) * h_stride +
                                                static_cast<std::size_t>(t) * h_dim;
                       const double* hv = n.val.data() + hoff;
                       const double* gy = n.grad.data() + hoff;
                       const double* cv = carry.data() + static_cast<std::size_t>(bi) * h_dim;
                       double* dp = dpre.data() + static_cast<std::size_t>(bi) * h_dim;
                       for (int j = 0; j < h_dim; ++j)
                         dp[j] = (gy[j] + cv[j]) * (1.0 - hv[j] * hv[j]);
                     }
                     if (gwx)
                       gemm(true, false, din, h_dim, batch, 1.0,
                            x.data() + static_cast<std::size_t>(t) * din, x_stride,
                            dpre.data(), h_dim, 1.0, wx.node()->grad.data(), h_dim);
                     if (gwh && t > 0)
                       gemm(true, false, h_dim, h_dim, batch, 1.0,
                            n.val.data() + static_cast<std::size_t>(t - 1) * h_dim, h_stride,
                            dpre.data(), h_dim, 1.0, wh.node()->grad.data(), h_dim);
                     if (gb) {
                       double* gbv = b.node()->grad.data();
                       for (int bi = 0; bi < batch; ++bi) {
                         const double* dp = dpre.data() + static_cast<std::size_t>(bi) * h_dim;
                         for (int j = 0; j < h_dim; ++j) gbv[j] += dp[j];
                       }
                     }
                     if (gx_p)
                       gemm(false, true, batch, din, h_dim, 1.0, dpre.data(), h_dim, wx.data(),
                            h_dim, 1.0,
                            x.node()->grad.data() + static_cast<std::size_t>(t) * din,
                            x_stride);
                     if (t > 0)
                       gemm(false, true, batch, h_dim, h_dim, 1.0, dpre.data(), h_dim,
                            wh.data(), h_dim, 0.0, carry.data(), h_dim);
                   }
                 });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_op({1}, {total}, {x}, [x](Node& n) {
    if (!wants_grad(x)) return;
    x.node()->ensure_grad();
    auto& gx = x.node()->grad;
    for (double& g : gx) g += n.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_op({1}, {total * inv}, {x}, [x, inv](Node& n) {
    if (!wants_grad(x)) return;
    x.node()->ensure_grad();
    auto& gx = x.node()->grad;
    for (double& g : gx) g += n.grad[0] * inv;
  });
}

Tensor xavier_init(const std::vector<int>& shape, RngState& rng, bool requires_grad) {
  double fan_in = 0.0, fan_out = 0.0;
  if (shape.size() >= 2) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = static_cast<double>(shape[1]);
    for (std::size_t i = 2; i < shape.size(); ++i) fan_out *= shape[i];
  } else if (shape.size() == 1) {
    fan_in = fan_out = static_cast<double>(shape[0]);
  } else {
    throw ShapeError("xavier_init: empty shape");
  }
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(shape, requires_grad);
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace enginefault::nn
