#pragma once

#include "reenact/nn/ops.hpp"

#include <random>
#include <string>
#include <utility>

namespace reenact::nn {

using Rng = std::mt19937_64;

// Parameter/buffer registry. Modules refer to their children by address, so
// they are neither copyable nor movable; networks live behind unique_ptr.
template <typename S>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<std::pair<std::string, Var<S>>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor<S>*>> named_buffers();
  std::vector<Var<S>> parameters() const;
  std::size_t parameter_count() const;

  void set_training(bool on);
  bool training() const { return training_; }
  void zero_grad();
  // Freezing parameters lets gradients flow through the module without
  // accumulating into it.
  void set_requires_grad(bool on);

 protected:
  Var<S> register_parameter(std::string name, Tensor<S> init);
  void register_buffer(std::string name, Tensor<S>* buffer);
  void register_module(std::string name, Module& child);

 private:
  bool training_ = true;
  std::vector<std::pair<std::string, Var<S>>> params_;
  std::vector<std::pair<std::string, Tensor<S>*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
template <typename S>
Tensor<S> uniform_init(Shape shape, int fan_in, Rng& rng);

template <typename S>
class Conv2d : public Module<S> {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng, bool bias = true);
  Var<S> operator()(const Var<S>& x) const { return conv2d(x, weight, bias, stride_, pad_); }

  Var<S> weight, bias;

 private:
  int stride_, pad_;
};

template <typename S>
class ConvTranspose2d : public Module<S> {
 public:
  ConvTranspose2d(int in, int out, int kernel, int stride, int pad, int output_pad, Rng& rng);
  Var<S> operator()(const Var<S>& x) const {
    return conv_transpose2d(x, weight, bias, stride_, pad_, output_pad_);
  }

  Var<S> weight, bias;

 private:
  int stride_, pad_, output_pad_;
};

template <typename S>
class Linear : public Module<S> {
 public:
  Linear(int in, int out, Rng& rng);
  Var<S> operator()(const Var<S>& x) const { return linear(x, weight, bias); }

  Var<S> weight, bias;
};

template <typename S>
class BatchNorm2d : public Module<S> {
 public:
  explicit BatchNorm2d(int channels);
  Var<S> operator()(const Var<S>& x) { return batch_norm(x, gamma, beta, stats_, this->training()); }

  Var<S> gamma, beta;

 private:
  RunningStats<S> stats_;
};

template <typename S>
class InstanceNorm2d : public Module<S> {
 public:
  InstanceNorm2d(int channels, bool affine);
  Var<S> operator()(const Var<S>& x) const { return instance_norm(x, gamma, beta); }

  Var<S> gamma, beta;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
class Adam {
 public:
  Adam(std::vector<Var<S>> params, AdamConfig config);
  void step();
  void zero_grad();
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Var<S>> params_;
  std::vector<Eigen::Array<S, Eigen::Dynamic, 1>> m_, v_;
  AdamConfig config_;
  long t_ = 0;
};

}  // namespace reenact::nn
