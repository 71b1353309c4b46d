#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "enginefault/tensor.hpp"

namespace enginefault::nn {

// A named trainable tensor plus its Adam moment buffers.
struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  std::int64_t step = 0;

  Parameter() = default;
  Parameter(std::string name_, Tensor tensor_) : name(std::move(name_)), tensor(std::move(tensor_)) {
    tensor.set_requires_grad(true);
    m.assign(static_cast<std::size_t>(tensor.size()), 0.0);
    v.assign(static_cast<std::size_t>(tensor.size()), 0.0);
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam update with bias correction. Parameters without an allocated
// gradient are treated as zero-gradient and only advance their step count.
void adam_step(std::vector<Parameter>& params, const AdamConfig& cfg);

// Sets every parameter's gradient buffer to exact zero.
void zero_grad(std::vector<Parameter>& params);

// Total number of scalar values across parameters.
std::int64_t parameter_count(const std::vector<Parameter>& params);

}  // namespace enginefault::nn
