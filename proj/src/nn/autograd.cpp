#include "reenact/nn/autograd.hpp"

#include <unordered_set>

namespace reenact::nn {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

template <typename S>
Var<S> Var<S>::constant(Tensor<S> t) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(t);
  return Var(std::move(n));
}

template <typename S>
Var<S> Var<S>::parameter(Tensor<S> t) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

template <typename S>
Var<S> Var<S>::make(Tensor<S> value, const std::vector<Var>& parents, std::function<void(Node<S>&)> backward) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  bool needs = false;
  if (GradMode::enabled())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node_);
    n->backward_fn = std::move(backward);
  }
  return Var(std::move(n));
}

template <typename S>
Var<S> Var<S>::make(Tensor<S> value, std::initializer_list<Var> parents, std::function<void(Node<S>&)> backward) {
  return make(std::move(value), std::vector<Var>(parents), std::move(backward));
}

template <typename S>
S Var<S>::item() const {
  if (node_->value.data.size() != 1) throw std::logic_error("item() on non-scalar " + shape().str());
  return node_->value.data[0];
}

template <typename S>
void Var<S>::backward() const {
  if (node_->value.data.size() != 1) throw std::logic_error("backward() without seed on non-scalar");
  backward(Tensor<S>(node_->value.shape, S(1)));
}

template <typename S>
void Var<S>::backward(const Tensor<S>& seed) const {
  if (!node_->requires_grad) return;
  if (!(seed.shape == node_->value.shape)) throw std::logic_error("backward seed shape mismatch");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<S>* p = n->parents[idx++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad().data += seed.data;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    // Interior gradients are not needed once propagated.
    if (n->backward_fn && n != node_.get()) n->grad = Tensor<S>();
  }
}

template class Var<float>;
template class Var<double>;

}  // namespace reenact::nn
