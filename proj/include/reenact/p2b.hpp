#pragma once

#include "reenact/augment.hpp"
#include "reenact/gan.hpp"
#include "reenact/config.hpp"
#include "reenact/nn/layers.hpp"
#include "reenact/synthdata.hpp"
#include "reenact/training.hpp"

#include <memory>

namespace reenact {

// p* one-hot (22) + stick figure (3) + dense U, V, I/24 (3).
inline constexpr int kP2BInputChannels = kBodyLabelCount + 6;

struct P2BConfig {
  int height = 128, width = 80;
  int ngf = 16;
  int n_down = 2;
  int n_res = 4;
  int outer_kernel = 7;  // stem and head kernel
  int ndf = 16;
  double lambda_fm = 40.0;
  double lambda_ce = 1.0;
  nn::AdamConfig adam;
  int batch = 16;
  int window = 250;
  bool squeeze_stretch = true;
  AugmentConfig augment;

  static P2BConfig from(const Config& c);
  Config to_config() const;
};

template <typename S>
class ResidualBlock : public nn::Module<S> {
 public:
  ResidualBlock(int channels, nn::Rng& rng);
  nn::Var<S> operator()(const nn::Var<S>& x);

 private:
  nn::Conv2d<S> c1_, c2_;
  nn::BatchNorm2d<S> n1_, n2_;
};

// Encoder (strided convolutions, batch norm, ReLU), residual blocks, decoder
// (fractional-strided convolutions, instance norm, ReLU) and a 22-logit head.
template <typename S>
class P2BGenerator : public nn::Module<S> {
 public:
  P2BGenerator(const P2BConfig& cfg, nn::Rng& rng);
  nn::Var<S> operator()(const nn::Var<S>& input);

 private:
  std::unique_ptr<nn::Conv2d<S>> stem_;
  std::unique_ptr<nn::BatchNorm2d<S>> stem_norm_;
  std::vector<std::unique_ptr<nn::Conv2d<S>>> down_;
  std::vector<std::unique_ptr<nn::BatchNorm2d<S>>> down_norm_;
  std::vector<std::unique_ptr<ResidualBlock<S>>> res_;
  std::vector<std::unique_ptr<nn::ConvTranspose2d<S>>> up_;
  std::vector<std::unique_ptr<nn::InstanceNorm2d<S>>> up_norm_;
  std::unique_ptr<nn::Conv2d<S>> head_;
};

template <typename S>
nn::Var<S> loss_lsgan_g(const nn::Var<S>& d_fake);
template <typename S>
nn::Var<S> loss_lsgan_d(const nn::Var<S>& d_real, const nn::Var<S>& d_fake);
template <typename S>
nn::Var<S> loss_ce(const nn::Var<S>& logits, const std::vector<const SemanticMap*>& gt);

struct P2BLossParts {
  std::vector<double> lsgan;  // per discriminator
  std::vector<double> fm;     // per discriminator
  double ce = 0.0;
};
double p2b_total_loss(const P2BLossParts& parts, double lambda_fm = 40.0, double lambda_ce = 1.0);

struct P2BSample {
  SemanticMap p_star;
  PoseBundle pose;  // stick_render and dense_render are used
  SemanticMap gt;
};

template <typename S>
nn::Tensor<S> p2b_input(const std::vector<const P2BSample*>& batch);
template <typename S>
nn::Tensor<S> p2b_input(const SemanticMap& p_star, const PoseBundle& pose);

// Pairs a target structure (record a) with a driving pose and its ground truth
// (record b), injects hand labels, then applies squeeze/stretch to the two maps
// and one rotation/scale to everything.
P2BSample make_p2b_sample(const SampleRecord& a, const SampleRecord& b, const P2BConfig& cfg, Rng& rng,
                          bool augment);
std::vector<P2BSample> make_p2b_batch(const Dataset& ds, const P2BConfig& cfg, Rng& rng);

struct P2BOutput {
  nn::Tensor<float> probs;  // softmax over 22 channels, [1, 22, H, W]
  SemanticMap map;
};

class P2BModel {
 public:
  P2BModel(P2BConfig cfg, std::uint64_t seed);

  P2BOutput forward(const SemanticMap& p_star, const PoseBundle& pose);
  LossReport train_step(const std::vector<P2BSample>& batch);

  P2BGenerator<float>& generator() { return *gen_; }
  MultiScaleDiscriminator<float>& discriminator() { return *disc_; }
  const P2BConfig& config() const { return cfg_; }

 private:
  P2BConfig cfg_;
  nn::Rng rng_;
  std::unique_ptr<P2BGenerator<float>> gen_;
  std::unique_ptr<MultiScaleDiscriminator<float>> disc_;
  std::unique_ptr<nn::Adam<float>> opt_g_, opt_d_;
};

}  // namespace reenact
