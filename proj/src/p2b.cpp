#include "reenact/p2b.hpp"

#include "reenact/nn/convert.hpp"

#include <cmath>

namespace reenact {

using nn::Shape;
using nn::Tensor;
using nn::Var;

P2BConfig P2BConfig::from(const Config& c) {
  P2BConfig p;
  p.height = c.get("resolution.height", p.height);
  p.width = c.get("resolution.width", p.width);
  p.ngf = c.get("p2b.ngf", p.ngf);
  p.n_down = c.get("p2b.n_down", p.n_down);
  p.n_res = c.get("p2b.n_res", p.n_res);
  p.outer_kernel = c.get("p2b.outer_kernel", p.outer_kernel);
  p.ndf = c.get("p2b.ndf", p.ndf);
  p.lambda_fm = c.get("p2b.lambda_fm", p.lambda_fm);
  p.lambda_ce = c.get("p2b.lambda_ce", p.lambda_ce);
  p.adam.lr = c.get("p2b.lr", p.adam.lr);
  p.adam.beta1 = c.get("p2b.beta1", p.adam.beta1);
  p.adam.beta2 = c.get("p2b.beta2", p.adam.beta2);
  p.batch = c.get("p2b.batch", p.batch);
  p.window = c.get("p2b.window", p.window);
  p.squeeze_stretch = c.get("p2b.squeeze_stretch", p.squeeze_stretch);
  p.augment = AugmentConfig::from(c);
  if (p.ngf <= 0 || p.ndf <= 0 || p.n_down < 0 || p.n_res < 0 || p.batch <= 0 ||
      p.outer_kernel <= 0 || p.outer_kernel % 2 == 0)
    throw ConfigError("p2b sizes must be positive");
  const int f = 1 << p.n_down;
  if (p.height % f != 0 || p.width % f != 0)
    throw ConfigError("resolution must be divisible by 2^p2b.n_down");
  return p;
}

Config P2BConfig::to_config() const {
  Config c;
  c.set("resolution.height", double(height));
  c.set("resolution.width", double(width));
  c.set("p2b.ngf", double(ngf));
  c.set("p2b.n_down", double(n_down));
  c.set("p2b.n_res", double(n_res));
  c.set("p2b.outer_kernel", double(outer_kernel));
  c.set("p2b.ndf", double(ndf));
  c.set("p2b.lambda_fm", lambda_fm);
  c.set("p2b.lambda_ce", lambda_ce);
  c.set("p2b.lr", adam.lr);
  c.set("p2b.beta1", adam.beta1);
  c.set("p2b.beta2", adam.beta2);
  c.set("p2b.batch", double(batch));
  c.set("p2b.window", double(window));
  c.set("p2b.squeeze_stretch", std::string(squeeze_stretch ? "true" : "false"));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g", augment.squeeze_range.first, augment.squeeze_range.second);
  c.set("augment.squeeze_range", std::string(buf));
  std::snprintf(buf, sizeof buf, "%.17g,%.17g", augment.scale_range.first, augment.scale_range.second);
  c.set("augment.scale_range", std::string(buf));
  c.set("augment.rot_deg", augment.rot_deg);
  return c;
}

template <typename S>
ResidualBlock<S>::ResidualBlock(int channels, nn::Rng& rng)
    : c1_(channels, channels, 3, 1, 1, rng), c2_(channels, channels, 3, 1, 1, rng), n1_(channels), n2_(channels) {
  this->register_module("c1", c1_);
  this->register_module("n1", n1_);
  this->register_module("c2", c2_);
  this->register_module("n2", n2_);
}

template <typename S>
Var<S> ResidualBlock<S>::operator()(const Var<S>& x) {
  Var<S> h = nn::relu(n1_(c1_(x)));
  return nn::add(x, n2_(c2_(h)));
}

template <typename S>
P2BGenerator<S>::P2BGenerator(const P2BConfig& cfg, nn::Rng& rng) {
  int ch = cfg.ngf;
  stem_ = std::make_unique<nn::Conv2d<S>>(kP2BInputChannels, ch, cfg.outer_kernel, 1, cfg.outer_kernel / 2, rng);
  stem_norm_ = std::make_unique<nn::BatchNorm2d<S>>(ch);
  this->register_module("stem", *stem_);
  this->register_module("stem_norm", *stem_norm_);
  for (int i = 0; i < cfg.n_down; ++i) {
    down_.push_back(std::make_unique<nn::Conv2d<S>>(ch, 2 * ch, 3, 2, 1, rng));
    down_norm_.push_back(std::make_unique<nn::BatchNorm2d<S>>(2 * ch));
    this->register_module("down" + std::to_string(i), *down_.back());
    this->register_module("down_norm" + std::to_string(i), *down_norm_.back());
    ch *= 2;
  }
  for (int i = 0; i < cfg.n_res; ++i) {
    res_.push_back(std::make_unique<ResidualBlock<S>>(ch, rng));
    this->register_module("res" + std::to_string(i), *res_.back());
  }
  for (int i = 0; i < cfg.n_down; ++i) {
    up_.push_back(std::make_unique<nn::ConvTranspose2d<S>>(ch, ch / 2, 3, 2, 1, 1, rng));
    up_norm_.push_back(std::make_unique<nn::InstanceNorm2d<S>>(ch / 2, true));
    this->register_module("up" + std::to_string(i), *up_.back());
    this->register_module("up_norm" + std::to_string(i), *up_norm_.back());
    ch /= 2;
  }
  head_ = std::make_unique<nn::Conv2d<S>>(ch, kBodyLabelCount, cfg.outer_kernel, 1, cfg.outer_kernel / 2, rng);
  this->register_module("head", *head_);
}

template <typename S>
Var<S> P2BGenerator<S>::operator()(const Var<S>& input) {
  if (input.shape().c != kP2BInputChannels)
    throw ShapeError("P2B input needs " + std::to_string(kP2BInputChannels) + " channels, got " +
                     input.shape().str());
  Var<S> x = nn::relu((*stem_norm_)((*stem_)(input)));
  for (std::size_t i = 0; i < down_.size(); ++i) x = nn::relu((*down_norm_[i])((*down_[i])(x)));
  for (auto& r : res_) x = (*r)(x);
  for (std::size_t i = 0; i < up_.size(); ++i) x = nn::relu((*up_norm_[i])((*up_[i])(x)));
  return (*head_)(x);
}

template <typename S>
Var<S> loss_lsgan_g(const Var<S>& d_fake) {
  return nn::mean_squared_to(d_fake, S(1));
}

template <typename S>
Var<S> loss_lsgan_d(const Var<S>& d_real, const Var<S>& d_fake) {
  return nn::add(nn::scale(nn::mean_squared_to(d_real, S(1)), S(0.5)),
                 nn::scale(nn::mean_squared_to(d_fake, S(0)), S(0.5)));
}

template <typename S>
Var<S> loss_ce(const Var<S>& logits, const std::vector<const SemanticMap*>& gt) {
  const Shape s = logits.shape();
  if (int(gt.size()) != s.n) throw ShapeError("cross-entropy batch size mismatch");
  std::vector<int> labels;
  labels.reserve(std::size_t(s.n) * s.h * s.w);
  for (const auto* m : gt) {
    if (m->height() != s.h || m->width() != s.w) throw ShapeError("cross-entropy map size mismatch");
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const int l = (*m)(y, x);
        if (l >= s.c) throw InvalidLabelError("ground-truth label " + std::to_string(l) + " outside the output space");
        labels.push_back(l);
      }
  }
  return nn::softmax_cross_entropy(logits, labels);
}

double p2b_total_loss(const P2BLossParts& parts, double lambda_fm, double lambda_ce) {
  if (parts.lsgan.size() != parts.fm.size()) throw ShapeError("loss parts over different discriminator counts");
  double total = lambda_ce * parts.ce;
  for (std::size_t k = 0; k < parts.lsgan.size(); ++k) total += parts.lsgan[k] + lambda_fm * parts.fm[k];
  return total;
}

template <typename S>
Tensor<S> p2b_input(const std::vector<const P2BSample*>& batch) {
  if (batch.empty()) throw ShapeError("empty P2B batch");
  const int h = batch[0]->p_star.height(), w = batch[0]->p_star.width();
  Tensor<S> t(Shape{int(batch.size()), kP2BInputChannels, h, w});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const P2BSample& s = *batch[n];
    if (s.p_star.height() != h || s.p_star.width() != w || !s.pose.stick_render.same_dims(h, w) ||
        !s.pose.dense_render.same_dims(h, w))
      throw ShapeError("P2B inputs must share spatial dims");
    nn::write_one_hot(s.p_star, kBodyLabelCount, t, int(n));
    for (int c = 0; c < 3; ++c) t.plane(int(n), kBodyLabelCount + c) = s.pose.stick_render.rgb[c].template cast<S>();
    t.plane(int(n), kBodyLabelCount + 3) = s.pose.dense_render.rgb[0].template cast<S>();
    t.plane(int(n), kBodyLabelCount + 4) = s.pose.dense_render.rgb[1].template cast<S>();
    t.plane(int(n), kBodyLabelCount + 5) = s.pose.dense_render.rgb[2].template cast<S>() / S(kMaxDensePart);
  }
  return t;
}

template <typename S>
Tensor<S> p2b_input(const SemanticMap& p_star, const PoseBundle& pose) {
  P2BSample s{p_star, pose, SemanticMap()};
  return p2b_input<S>(std::vector<const P2BSample*>{&s});
}

P2BSample make_p2b_sample(const SampleRecord& a, const SampleRecord& b, const P2BConfig& cfg, Rng& rng,
                          bool augment) {
  P2BSample s;
  s.p_star = inject_hand_labels(a.parsing, a.pose.keypoints);
  s.gt = inject_hand_labels(b.parsing, b.pose.keypoints);
  s.pose = b.pose;
  if (augment) {
    if (cfg.squeeze_stretch) std::tie(s.p_star, s.gt) = squeeze_stretch(s.p_star, s.gt, cfg.augment.squeeze_range, rng);
    random_rot_scale({{&s.p_star, &s.gt}, {&s.pose.stick_render, &s.pose.dense_render}, {&s.pose.keypoints}},
                     s.gt.height(), s.gt.width(), cfg.augment.rot_deg, cfg.augment.scale_range, rng);
  }
  return s;
}

std::vector<P2BSample> make_p2b_batch(const Dataset& ds, const P2BConfig& cfg, Rng& rng) {
  std::vector<P2BSample> batch;
  for (int i = 0; i < cfg.batch; ++i) {
    auto [a, b] = sample_training_pair(ds, cfg.window, rng);
    batch.push_back(make_p2b_sample(*a, *b, cfg, rng, true));
  }
  return batch;
}

P2BModel::P2BModel(P2BConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
  gen_ = std::make_unique<P2BGenerator<float>>(cfg_, rng_);
  disc_ = std::make_unique<MultiScaleDiscriminator<float>>(kP2BInputChannels + kBodyLabelCount, cfg_.ndf, rng_);
  opt_g_ = std::make_unique<nn::Adam<float>>(gen_->parameters(), cfg_.adam);
  opt_d_ = std::make_unique<nn::Adam<float>>(disc_->parameters(), cfg_.adam);
}

P2BOutput P2BModel::forward(const SemanticMap& p_star, const PoseBundle& pose) {
  nn::NoGradGuard guard;
  gen_->set_training(false);
  const Var<float> logits = (*gen_)(Var<float>::constant(p2b_input<float>(p_star, pose)));
  P2BOutput out;
  out.probs = nn::softmax_channels(logits.value());
  out.map = nn::tensor_argmax(logits.value());
  return out;
}

LossReport P2BModel::train_step(const std::vector<P2BSample>& batch) {
  std::vector<const P2BSample*> ptrs;
  std::vector<const SemanticMap*> gts;
  for (const auto& s : batch) {
    ptrs.push_back(&s);
    gts.push_back(&s.gt);
  }
  gen_->set_training(true);
  disc_->set_training(true);
  const Var<float> input = Var<float>::constant(p2b_input<float>(ptrs));
  const Var<float> real = nn::concat_channels<float>(
      {input, Var<float>::constant(nn::maps_to_one_hot<float>(gts, kBodyLabelCount))});

  // Generator update against the current discriminators.
  const Var<float> logits = (*gen_)(input);
  const Var<float> fake_probs = nn::sigmoid(logits);
  std::vector<std::vector<Var<float>>> real_acts;
  {
    nn::NoGradGuard guard;
    real_acts = (*disc_)(real);
  }
  disc_->set_requires_grad(false);
  const auto fake_acts = (*disc_)(nn::concat_channels<float>({input, fake_probs}));
  disc_->set_requires_grad(true);
  Var<float> g_ls;
  for (const auto& acts : fake_acts) {
    Var<float> l = loss_lsgan_g(d_output(acts));
    g_ls = g_ls.defined() ? nn::add(g_ls, l) : l;
  }
  const Var<float> g_fm = loss_fm(real_acts, fake_acts);
  const Var<float> ce = loss_ce(logits, gts);
  const Var<float> g_total = nn::add(nn::add(g_ls, nn::scale(g_fm, float(cfg_.lambda_fm))),
                                     nn::scale(ce, float(cfg_.lambda_ce)));
  LossReport report;
  report.add("g_total", g_total.item());
  report.add("g_lsgan", g_ls.item());
  report.add("g_fm", g_fm.item());
  report.add("ce", ce.item());
  check_finite(report, "p2b generator");
  opt_g_->zero_grad();
  g_total.backward();
  opt_g_->step();

  // Discriminator update on the same generated maps.
  const Var<float> fake_d = nn::concat_channels<float>({input, fake_probs.detach()});
  const auto d_real = (*disc_)(real);
  const auto d_fake = (*disc_)(fake_d);
  Var<float> d_total;
  for (std::size_t k = 0; k < d_real.size(); ++k) {
    Var<float> l = loss_lsgan_d(d_output(d_real[k]), d_output(d_fake[k]));
    d_total = d_total.defined() ? nn::add(d_total, l) : l;
  }
  report.add("d_lsgan", d_total.item());
  check_finite(report, "p2b discriminator");
  opt_d_->zero_grad();
  d_total.backward();
  opt_d_->step();
  return report;
}

#define REENACT_INSTANTIATE_P2B(S)                                                                                 \
  template class ResidualBlock<S>;                                                                                 \
  template class P2BGenerator<S>;                                                                                  \
  template Var<S> loss_lsgan_g(const Var<S>&);                                                                     \
  template Var<S> loss_lsgan_d(const Var<S>&, const Var<S>&);                                                      \
  template Var<S> loss_ce(const Var<S>&, const std::vector<const SemanticMap*>&);                                   \
  template Tensor<S> p2b_input(const std::vector<const P2BSample*>&);                                              \
  template Tensor<S> p2b_input(const SemanticMap&, const PoseBundle&);

REENACT_INSTANTIATE_P2B(float)
REENACT_INSTANTIATE_P2B(double)

}  // namespace reenact
