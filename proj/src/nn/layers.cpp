#include "reenact/nn/layers.hpp"

#include <cmath>

namespace reenact::nn {

template <typename S>
std::vector<std::pair<std::string, Var<S>>> Module<S>::named_parameters() const {
  auto out = params_;
  for (const auto& [name, child] : children_)
    for (auto& [n, v] : child->named_parameters()) out.emplace_back(name + "." + n, v);
  return out;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>*>> Module<S>::named_buffers() {
  auto out = buffers_;
  for (auto& [name, child] : children_)
    for (auto& [n, t] : child->named_buffers()) out.emplace_back(name + "." + n, t);
  return out;
}

template <typename S>
std::vector<Var<S>> Module<S>::parameters() const {
  std::vector<Var<S>> out;
  for (auto& [n, v] : named_parameters()) out.push_back(v);
  return out;
}

template <typename S>
std::size_t Module<S>::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, v] : named_parameters()) n += std::size_t(v.value().data.size());
  return n;
}

template <typename S>
void Module<S>::set_training(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->set_training(on);
}

template <typename S>
void Module<S>::set_requires_grad(bool on) {
  for (auto& [name, v] : named_parameters()) v.node()->requires_grad = on;
}

template <typename S>
void Module<S>::zero_grad() {
  for (auto& [name, v] : named_parameters()) v.zero_grad();
}

template <typename S>
Var<S> Module<S>::register_parameter(std::string name, Tensor<S> init) {
  auto v = Var<S>::parameter(std::move(init));
  params_.emplace_back(std::move(name), v);
  return v;
}

template <typename S>
void Module<S>::register_buffer(std::string name, Tensor<S>* buffer) {
  buffers_.emplace_back(std::move(name), buffer);
}

template <typename S>
void Module<S>::register_module(std::string name, Module& child) {
  children_.emplace_back(std::move(name), &child);
}

template <typename S>
Tensor<S> uniform_init(Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<S> t(shape);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = S(dist(rng));
  return t;
}

template <typename S>
Conv2d<S>::Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng, bool use_bias)
    : stride_(stride), pad_(pad) {
  const int fan_in = in * kernel * kernel;
  weight = this->register_parameter("weight", uniform_init<S>(Shape{out, in, kernel, kernel}, fan_in, rng));
  if (use_bias) bias = this->register_parameter("bias", uniform_init<S>(Shape{1, out, 1, 1}, fan_in, rng));
}

template <typename S>
ConvTranspose2d<S>::ConvTranspose2d(int in, int out, int kernel, int stride, int pad, int output_pad, Rng& rng)
    : stride_(stride), pad_(pad), output_pad_(output_pad) {
  const int fan_in = out * kernel * kernel;
  weight = this->register_parameter("weight", uniform_init<S>(Shape{in, out, kernel, kernel}, fan_in, rng));
  bias = this->register_parameter("bias", uniform_init<S>(Shape{1, out, 1, 1}, fan_in, rng));
}

template <typename S>
Linear<S>::Linear(int in, int out, Rng& rng) {
  weight = this->register_parameter("weight", uniform_init<S>(Shape{out, in, 1, 1}, in, rng));
  bias = this->register_parameter("bias", uniform_init<S>(Shape{1, out, 1, 1}, in, rng));
}

template <typename S>
BatchNorm2d<S>::BatchNorm2d(int channels) {
  gamma = this->register_parameter("gamma", Tensor<S>(Shape{1, channels, 1, 1}, S(1)));
  beta = this->register_parameter("beta", Tensor<S>(Shape{1, channels, 1, 1}, S(0)));
  stats_.mean = Tensor<S>(Shape{1, channels, 1, 1}, S(0));
  stats_.var = Tensor<S>(Shape{1, channels, 1, 1}, S(1));
  this->register_buffer("running_mean", &stats_.mean);
  this->register_buffer("running_var", &stats_.var);
}

template <typename S>
InstanceNorm2d<S>::InstanceNorm2d(int channels, bool affine) {
  if (affine) {
    gamma = this->register_parameter("gamma", Tensor<S>(Shape{1, channels, 1, 1}, S(1)));
    beta = this->register_parameter("beta", Tensor<S>(Shape{1, channels, 1, 1}, S(0)));
  }
}

template <typename S>
Adam<S>::Adam(std::vector<Var<S>> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.push_back(Eigen::Array<S, Eigen::Dynamic, 1>::Zero(p.value().data.size()));
    v_.push_back(Eigen::Array<S, Eigen::Dynamic, 1>::Zero(p.value().data.size()));
  }
}

template <typename S>
void Adam<S>::step() {
  ++t_;
  const S b1 = S(config_.beta1), b2 = S(config_.beta2);
  const S c1 = S(1) - S(std::pow(config_.beta1, double(t_)));
  const S c2 = S(1) - S(std::pow(config_.beta2, double(t_)));
  const S lr = S(config_.lr), eps = S(config_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.grad().empty()) continue;
    const auto& g = p.grad().data;
    m_[i] = b1 * m_[i] + (S(1) - b1) * g;
    v_[i] = b2 * v_[i] + (S(1) - b2) * g.square();
    p.mutable_value().data -= lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + eps);
  }
}

template <typename S>
void Adam<S>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

#define REENACT_INSTANTIATE_LAYERS(S)                          \
  template class Module<S>;                                    \
  template Tensor<S> uniform_init<S>(Shape, int, Rng&);        \
  template class Conv2d<S>;                                    \
  template class ConvTranspose2d<S>;                           \
  template class Linear<S>;                                    \
  template class BatchNorm2d<S>;                               \
  template class InstanceNorm2d<S>;                            \
  template class Adam<S>;

REENACT_INSTANTIATE_LAYERS(float)
REENACT_INSTANTIATE_LAYERS(double)

}  // namespace reenact::nn
