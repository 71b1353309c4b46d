#include "enginefault/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace enginefault::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->val.assign(static_cast<std::size_t>(shape_size(shape)), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->val = std::move(values);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw InvalidArgumentError("backward on undefined tensor");
  if (loss.size() != 1)
    throw InvalidArgumentError("backward requires a scalar loss, got shape " +
                               shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw InvalidArgumentError("backward on a tensor that does not require grad");

  // Iterative post-order DFS over parent links.
  std::vector<std::shared_ptr<detail::Node>> topo;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    std::shared_ptr<detail::Node> node;
    std::size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node()});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      auto& p = f.node->parents[f.next_parent++];
      if (visited.insert(p.get()).second) stack.push_back({p});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::Node& n = **it;
    if (n.backward) {
      n.ensure_grad();
      n.backward(n);
    }
  }
  // Free the graph; leaves keep their grads.
  for (auto& n : topo) {
    n->backward = nullptr;
    n->parents.clear();
  }
}

}  // namespace enginefault::nn
