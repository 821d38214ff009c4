#pragma once

#include "reenact/nn/tensor.hpp"

#include <initializer_list>

namespace reenact::nn {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<Scalar>& ensure_grad() {
    if (grad.empty()) grad = Tensor<Scalar>(value.shape);
    return grad;
  }
};

// Graph recording is on by default; a NoGradGuard disables it for its scope.
struct GradMode {
  static bool enabled();
  static void set(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var constant(Tensor<Scalar> t);
  static Var parameter(Tensor<Scalar> t);

  // Result of an op: records the graph only when recording is enabled and
  // some parent needs a gradient.
  static Var make(Tensor<Scalar> value, std::initializer_list<Var> parents,
                  std::function<void(Node<Scalar>&)> backward);
  static Var make(Tensor<Scalar> value, const std::vector<Var>& parents,
                  std::function<void(Node<Scalar>&)> backward);

  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  Tensor<Scalar>& mutable_grad() { return node_->ensure_grad(); }
  const Shape& shape() const { return node_->value.shape; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return bool(node_); }
  Scalar item() const;
  Node<Scalar>* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

  Var detach() const { return constant(node_->value); }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  // Reverse sweep from this node. A scalar root is seeded with 1, otherwise
  // seed must match the value shape.
  void backward() const;
  void backward(const Tensor<Scalar>& seed) const;

 private:
  NodePtr node_;
};

}  // namespace reenact::nn
