#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rift/tensor.hpp"

namespace rift {

// One vertex of the reverse-mode graph. Interior nodes own a closure that
// pushes their gradient into the parents; leaves are constants or parameters.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor& grad_out)> backward;

  // Zero-initialized on first use.
  Tensor& grad_buffer();
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Optimizers write parameter values in place.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  // Only meaningful on leaves; used to freeze a network during the other's update.
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  Var detach() const { return constant(node_->value); }
  const NodePtr& node() const { return node_; }

 private:
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  friend Var make_result(Tensor value, const std::vector<Var>& parents,
                         std::function<void(const Tensor&)> backward);
  NodePtr node_;
};

// Wraps an op result. The closure is kept only when gradients are enabled
// and at least one parent requires them.
Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(const Tensor&)> backward);

// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
// `root` must hold a single element.
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Adds `delta` into the node's gradient buffer when it requires grad.
void accumulate(const NodePtr& node, const Tensor& delta);

}  // namespace rift
