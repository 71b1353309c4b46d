#include "enginefault/optim.hpp"

#include <cmath>

namespace enginefault::nn {

void adam_step(std::vector<Parameter>& params, const AdamConfig& cfg) {
  for (Parameter& p : params) {
    ++p.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    if (!p.tensor.has_grad()) continue;
    const auto& g = p.tensor.grad();
    auto& w = p.tensor.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g[i];
      p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void zero_grad(std::vector<Parameter>& params) {
  for (Parameter& p : params) p.tensor.zero_grad();
}

std::int64_t parameter_count(const std::vector<Parameter>& params) {
  std::int64_t n = 0;
  for (const Parameter& p : params) n += p.tensor.size();
  return n;
}

}  // namespace enginefault::nn
