#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "enginefault/errors.hpp"

namespace enginefault::nn {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated lazily, same length as val
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates into parents' grads

  std::int64_t size() const { return static_cast<std::int64_t>(val.size()); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

}  // namespace detail

// Thread-local switch: with grads disabled ops compute values only and record
// no graph. Used for evaluation passes.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Dense row-major tensor with an optional gradient buffer. Copies share the
// underlying node, so passing Tensor by value is cheap and ops on the result
// are visible through every handle.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return node_->size(); }

  double* data() { return node_->val.data(); }
  const double* data() const { return node_->val.data(); }
  std::vector<double>& values() { return node_->val; }
  const std::vector<double>& values() const { return node_->val; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return node_->grad.size() == node_->val.size(); }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Value of a one-element tensor.
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
    return node_->val[0];
  }

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse pass from a scalar loss. Accumulates d loss / d leaf into every
// reachable requires_grad tensor, then frees the recorded graph (parent links
// and closures); leaf gradients survive and accumulate across calls.
void backward(const Tensor& loss);

// Number of elements for a shape.
std::int64_t shape_size(const std::vector<int>& shape);

// Human-readable "(a, b, c)" for error messages.
std::string shape_str(const std::vector<int>& shape);

}  // namespace enginefault::nn
