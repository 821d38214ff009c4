#include "reenact/gan.hpp"

namespace reenact {

using nn::Var;

template <typename S>
PatchDiscriminator<S>::PatchDiscriminator(int in_channels, int ndf, nn::Rng& rng)
    : c1_(in_channels, ndf, 4, 2, 1, rng),
      c2_(ndf, 2 * ndf, 4, 2, 1, rng),
      c3_(2 * ndf, 2 * ndf, 3, 1, 1, rng),
      out_(2 * ndf, 1, 3, 1, 1, rng),
      n2_(2 * ndf, true),
      n3_(2 * ndf, true) {
  this->register_module("c1", c1_);
  this->register_module("c2", c2_);
  this->register_module("n2", n2_);
  this->register_module("c3", c3_);
  this->register_module("n3", n3_);
  this->register_module("out", out_);
}

template <typename S>
std::vector<Var<S>> PatchDiscriminator<S>::operator()(const Var<S>& x) const {
  const S slope = S(0.2);
  std::vector<Var<S>> acts;
  acts.push_back(nn::leaky_relu(c1_(x), slope));
  acts.push_back(nn::leaky_relu(n2_(c2_(acts.back())), slope));
  acts.push_back(nn::leaky_relu(n3_(c3_(acts.back())), slope));
  acts.push_back(out_(acts.back()));
  return acts;
}

template <typename S>
MultiScaleDiscriminator<S>::MultiScaleDiscriminator(int in_channels, int ndf, nn::Rng& rng)
    : d1_(in_channels, ndf, rng), d2_(in_channels, ndf, rng) {
  this->register_module("d1", d1_);
  this->register_module("d2", d2_);
}

template <typename S>
std::vector<std::vector<Var<S>>> MultiScaleDiscriminator<S>::operator()(const Var<S>& x) const {
  return {d1_(x), d2_(nn::avg_pool2(x))};
}

template <typename S>
Var<S> loss_fm(const std::vector<std::vector<Var<S>>>& real_acts, const std::vector<std::vector<Var<S>>>& fake_acts) {
  if (real_acts.size() != fake_acts.size()) throw ShapeError("feature matching over different discriminator counts");
  Var<S> total;
  for (std::size_t k = 0; k < real_acts.size(); ++k) {
    if (real_acts[k].size() != fake_acts[k].size() || real_acts[k].empty())
      throw ShapeError("feature matching over misaligned activation lists");
    for (std::size_t j = 0; j + 1 < real_acts[k].size(); ++j) {
      if (real_acts[k][j].shape() != fake_acts[k][j].shape())
        throw ShapeError("feature matching shape " + real_acts[k][j].shape().str() + " vs " +
                         fake_acts[k][j].shape().str());
      Var<S> term = nn::mean_abs_diff(fake_acts[k][j], real_acts[k][j]);
      total = total.defined() ? nn::add(total, term) : term;
    }
  }
  if (!total.defined()) throw ShapeError("feature matching needs at least one activation");
  return total;
}

template <typename S>
Var<S> loss_hinge_g(const std::vector<Var<S>>& d_fake) {
  if (d_fake.empty()) throw ShapeError("hinge loss needs at least one discriminator");
  Var<S> total;
  for (const auto& d : d_fake) {
    const Var<S> l = nn::scale(nn::mean(d), S(-1));
    total = total.defined() ? nn::add(total, l) : l;
  }
  return total;
}

template <typename S>
Var<S> loss_hinge_d(const std::vector<Var<S>>& d_real, const std::vector<Var<S>>& d_fake) {
  if (d_real.size() != d_fake.size() || d_real.empty())
    throw ShapeError("hinge loss over different discriminator counts");
  Var<S> total;
  for (std::size_t k = 0; k < d_real.size(); ++k) {
    const Var<S> l = nn::add(nn::mean_hinge(d_real[k], S(-1)), nn::mean_hinge(d_fake[k], S(1)));
    total = total.defined() ? nn::add(total, l) : l;
  }
  return total;
}

#define REENACT_INSTANTIATE_GAN(S)                                                                                 \
  template class PatchDiscriminator<S>;                                                                            \
  template class MultiScaleDiscriminator<S>;                                                                       \
  template Var<S> loss_fm(const std::vector<std::vector<Var<S>>>&, const std::vector<std::vector<Var<S>>>&);     \
  template Var<S> loss_hinge_g(const std::vector<Var<S>>&);                                                        \
  template Var<S> loss_hinge_d(const std::vector<Var<S>>&, const std::vector<Var<S>>&);

REENACT_INSTANTIATE_GAN(float)
REENACT_INSTANTIATE_GAN(double)

}  // namespace reenact
