#pragma once

// Define-by-run reverse-mode differentiation over dense double tensors.
// Every op allocates a node holding its value and, when any input needs a
// gradient, a closure that pushes the output gradient back to the inputs.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "cwm/error.hpp"

namespace cwm::ag {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads this->grad, adds into parents

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Constant (no gradient) tensor.
  static Tensor constant(Shape shape, std::vector<double> values) {
    require(numel(shape) == values.size(), ErrorCode::kShapeMismatch,
            "values do not fill shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape) {
    const auto n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
  }

  /// Leaf that accumulates a gradient.
  static Tensor parameter(Shape shape, std::vector<double> values) {
    auto t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  double item() const {
    require(size() == 1, ErrorCode::kShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  void zero_grad() { node_->grad.clear(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op result. `backward` is attached only if some input needs a
/// gradient, so pure inference builds no graph.
inline Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& in : inputs)
    if (in.requires_grad()) n->requires_grad = true;
  if (n->requires_grad) {
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

/// Reverse pass from a scalar. Each node runs its backward closure exactly
/// once, after all of its consumers have contributed to its gradient.
inline void backward(const Tensor& root) {
  require(root.size() == 1, ErrorCode::kShapeMismatch, "backward() needs a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // iterative post-order DFS
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

/// Same value, no gradient path back to the input.
inline Tensor detach(const Tensor& x) { return Tensor::constant(x.shape(), x.value()); }

}  // namespace cwm::ag
