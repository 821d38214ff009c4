#pragma once

#include "reenact/core.hpp"
#include "reenact/nn/layers.hpp"

namespace reenact {

// PatchGAN: three strided/normalized LeakyReLU stages and a 1-channel output.
// The returned list holds every intermediate activation followed by the output.
template <typename S>
class PatchDiscriminator : public nn::Module<S> {
 public:
  PatchDiscriminator(int in_channels, int ndf, nn::Rng& rng);
  std::vector<nn::Var<S>> operator()(const nn::Var<S>& x) const;

 private:
  nn::Conv2d<S> c1_, c2_, c3_, out_;
  nn::InstanceNorm2d<S> n2_, n3_;
};

// Full-resolution and half-resolution discriminators.
template <typename S>
class MultiScaleDiscriminator : public nn::Module<S> {
 public:
  MultiScaleDiscriminator(int in_channels, int ndf, nn::Rng& rng);
  std::vector<std::vector<nn::Var<S>>> operator()(const nn::Var<S>& x) const;

 private:
  PatchDiscriminator<S> d1_, d2_;
};

// Output of a discriminator is the last entry of its activation list.
template <typename S>
const nn::Var<S>& d_output(const std::vector<nn::Var<S>>& acts) {
  return acts.back();
}

// Sum over discriminators k and layers j (excluding each output) of the mean
// absolute difference, i.e. (1/N_j) * L1.
template <typename S>
nn::Var<S> loss_fm(const std::vector<std::vector<nn::Var<S>>>& real_acts,
                   const std::vector<std::vector<nn::Var<S>>>& fake_acts);

// Hinge adversarial losses, each summed over discriminators.
template <typename S>
nn::Var<S> loss_hinge_g(const std::vector<nn::Var<S>>& d_fake);
template <typename S>
nn::Var<S> loss_hinge_d(const std::vector<nn::Var<S>>& d_real, const std::vector<nn::Var<S>>& d_fake);

}  // namespace reenact
