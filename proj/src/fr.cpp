#include "reenact/fr.hpp"

#include "reenact/nn/convert.hpp"

#include <cmath>

namespace reenact {

using nn::Shape;
using nn::Tensor;
using nn::Var;

FRConfig FRConfig::from(const Config& c) {
  FRConfig f;
  f.crop = c.get("fr.crop", f.crop);
  f.nf = c.get("fr.nf", f.nf);
  f.ndf = c.get("fr.ndf", f.ndf);
  f.lambda_facep = c.get("fr.lambda_facep", f.lambda_facep);
  f.lambda_rec = c.get("fr.lambda_rec", f.lambda_rec);
  f.lambda_mask_reg = c.get("fr.lambda_mask_reg", f.lambda_mask_reg);
  f.lambda_adv = c.get("fr.lambda_adv", f.lambda_adv);
  f.adam.lr = c.get("fr.lr", f.adam.lr);
  f.adam.beta1 = c.get("fr.beta1", f.adam.beta1);
  f.adam.beta2 = c.get("fr.beta2", f.adam.beta2);
  f.batch = c.get("fr.batch", f.batch);
  f.window = c.get("fr.window", f.window);
  f.blur_sigma = c.get_range("fr.blur_sigma", f.blur_sigma);
  f.noise_sigma = c.get("fr.noise_sigma", f.noise_sigma);
  if (f.crop < 8 || f.crop % 4 != 0) throw ConfigError("fr.crop must be a multiple of 4 and at least 8");
  if (f.nf <= 0 || f.ndf <= 0 || f.batch <= 0) throw ConfigError("fr sizes must be positive");
  if (f.blur_sigma.first < 0.0 || f.blur_sigma.second < f.blur_sigma.first || f.noise_sigma < 0.0)
    throw ConfigError("invalid fr degradation parameters");
  return f;
}

Config FRConfig::to_config() const {
  Config c;
  c.set("fr.crop", double(crop));
  c.set("fr.nf", double(nf));
  c.set("fr.ndf", double(ndf));
  c.set("fr.lambda_facep", lambda_facep);
  c.set("fr.lambda_rec", lambda_rec);
  c.set("fr.lambda_mask_reg", lambda_mask_reg);
  c.set("fr.lambda_adv", lambda_adv);
  c.set("fr.lr", adam.lr);
  c.set("fr.beta1", adam.beta1);
  c.set("fr.beta2", adam.beta2);
  c.set("fr.batch", double(batch));
  c.set("fr.window", double(window));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g", blur_sigma.first, blur_sigma.second);
  c.set("fr.blur_sigma", std::string(buf));
  c.set("fr.noise_sigma", noise_sigma);
  return c;
}

namespace {

float bilinear(const Plane& p, double sy, double sx) {
  const int h = int(p.rows()), w = int(p.cols());
  sx = std::clamp(sx, 0.0, double(w - 1));
  sy = std::clamp(sy, 0.0, double(h - 1));
  const int x0 = int(sx), y0 = int(sy), x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const float ax = float(sx - x0), ay = float(sy - y0);
  return (1 - ay) * ((1 - ax) * p(y0, x0) + ax * p(y0, x1)) + ay * ((1 - ax) * p(y1, x0) + ax * p(y1, x1));
}

// Pixel-center aligned bilinear resize of a sub-rectangle.
Frame resample(const Frame& f, double x0, double y0, double bw, double bh, int out_h, int out_w) {
  Frame out(out_h, out_w);
  for (int i = 0; i < out_h; ++i)
    for (int j = 0; j < out_w; ++j) {
      const double sx = x0 + (j + 0.5) * bw / out_w - 0.5, sy = y0 + (i + 0.5) * bh / out_h - 0.5;
      for (int c = 0; c < 3; ++c) out.rgb[c](i, j) = bilinear(f.rgb[c], sy, sx);
    }
  return out;
}

}  // namespace

Frame crop_face(const Frame& frame, const Box& box, int size) {
  if (!box.valid || box.empty()) throw ShapeError("cannot crop an empty face box");
  return resample(frame, box.x0, box.y0, box.width(), box.height(), size, size);
}

Frame gaussian_blur(const Frame& f, double sigma) {
  if (sigma <= 0.0) return f;
  const int r = int(std::ceil(3.0 * sigma));
  std::vector<float> k(2 * r + 1);
  float total = 0.f;
  for (int i = -r; i <= r; ++i) total += k[i + r] = float(std::exp(-0.5 * i * i / (sigma * sigma)));
  for (auto& v : k) v /= total;
  const int h = f.height(), w = f.width();
  Frame out(h, w);
  for (int c = 0; c < 3; ++c) {
    Plane tmp(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = 0.f;
        for (int i = -r; i <= r; ++i) s += k[i + r] * f.rgb[c](y, std::clamp(x + i, 0, w - 1));
        tmp(y, x) = s;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = 0.f;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp(std::clamp(y + i, 0, h - 1), x);
        out.rgb[c](y, x) = s;
      }
  }
  return out;
}

Frame degrade(const Frame& crop, const FRConfig& cfg, Rng& rng) {
  const double sigma = std::uniform_real_distribution<double>(cfg.blur_sigma.first, cfg.blur_sigma.second)(rng);
  Frame out = gaussian_blur(crop, sigma);
  std::normal_distribution<float> noise(0.f, float(cfg.noise_sigma));
  if (cfg.noise_sigma > 0.0)
    for (auto& p : out.rgb)
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += noise(rng);
  out.clamp();
  return out;
}

template <typename S>
FRNetwork<S>::FRNetwork(const FRConfig& cfg, int embed_dim, nn::Rng& rng)
    : cfg_(cfg),
      embed_dim_(embed_dim),
      e1_(3, cfg.nf, 3, 1, 1, rng),
      e2_(cfg.nf, 2 * cfg.nf, 4, 2, 1, rng),
      e3_(2 * cfg.nf, 4 * cfg.nf, 4, 2, 1, rng),
      fuse_(8 * cfg.nf, 4 * cfg.nf, 3, 1, 1, rng),
      m2_(4 * cfg.nf, 2 * cfg.nf, 3, 1, 1, rng),
      m1_(2 * cfg.nf, cfg.nf, 3, 1, 1, rng),
      crop_head_(cfg.nf, 3, 3, 1, 1, rng),
      mask_head_(cfg.nf, 1, 3, 1, 1, rng),
      id_(embed_dim, 4 * cfg.nf, rng),
      u2_(4 * cfg.nf, 2 * cfg.nf, 4, 2, 1, 0, rng),
      u1_(2 * cfg.nf, cfg.nf, 4, 2, 1, 0, rng) {
  this->register_module("e1", e1_);
  this->register_module("e2", e2_);
  this->register_module("e3", e3_);
  this->register_module("id", id_);
  this->register_module("fuse", fuse_);
  this->register_module("u2", u2_);
  this->register_module("m2", m2_);
  this->register_module("u1", u1_);
  this->register_module("m1", m1_);
  this->register_module("crop_head", crop_head_);
  this->register_module("mask_head", mask_head_);
}

template <typename S>
typename FRNetwork<S>::Result FRNetwork<S>::operator()(const Var<S>& c0, const Var<S>& identity) const {
  const Shape s = c0.shape();
  if (s.c != 3 || s.h != cfg_.crop || s.w != cfg_.crop)
    throw ShapeError("face crop " + s.str() + " does not match fr.crop " + std::to_string(cfg_.crop));
  if (identity.shape().n != s.n || identity.shape().sample() != embed_dim_)
    throw ShapeError("identity embedding " + identity.shape().str() + " does not match the network");
  const Var<S> h1 = nn::relu(e1_(c0));
  const Var<S> h2 = nn::relu(e2_(h1));
  const Var<S> h3 = nn::relu(e3_(h2));
  // The identity embedding is concatenated to the latent at every position.
  const Var<S> id = nn::broadcast_spatial(nn::relu(id_(identity)), h3.shape().h, h3.shape().w);
  const Var<S> z = nn::relu(fuse_(nn::concat_channels<S>({h3, id})));
  const Var<S> d2 = nn::relu(m2_(nn::concat_channels<S>({nn::relu(u2_(z)), h2})));
  const Var<S> d1 = nn::relu(m1_(nn::concat_channels<S>({nn::relu(u1_(d2)), h1})));
  return {nn::sigmoid(crop_head_(d1)), nn::sigmoid(mask_head_(d1))};
}

template <typename S>
Var<S> loss_facep(const Var<S>& c_identity, const Var<S>& c, const ToyEmbedder<S>& face_embedder, int first_tap) {
  if (c_identity.shape() != c.shape()) throw ShapeError("facep on " + c.shape().str() + " vs " + c_identity.shape().str());
  const auto ti = face_embedder(c_identity).taps, tc = face_embedder(c).taps;
  if (first_tap < 0 || first_tap >= int(ti.size())) throw std::out_of_range("facep tap index");
  Var<S> total;
  for (std::size_t j = std::size_t(first_tap); j < ti.size(); ++j) {
    const Var<S> l = nn::mean_abs_diff(tc[j], ti[j]);
    total = total.defined() ? nn::add(total, l) : l;
  }
  return total;
}

Frame blend_back(const Frame& frame, const Box& box, const Frame& c, const BlendMask& m) {
  const int H = frame.height(), W = frame.width();
  if (!box.valid || box.empty() || box.x0 < 0 || box.y0 < 0 || box.x1 > W || box.y1 > H)
    throw ShapeError("face box lies outside the frame");
  if (!c.same_dims(m.height(), m.width())) throw ShapeError("crop and mask differ in size");
  const int bh = box.height(), bw = box.width();
  const Frame cr = c.same_dims(bh, bw) ? c : resample(c, 0, 0, c.width(), c.height(), bh, bw);
  Frame out = frame;
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      const int my = std::min(m.height() - 1, int((y + 0.5) * m.height() / bh));
      const int mx = std::min(m.width() - 1, int((x + 0.5) * m.width() / bw));
      const float a = m.alpha(my, mx);
      for (int ch = 0; ch < 3; ++ch) {
        float& f = out.rgb[ch](box.y0 + y, box.x0 + x);
        f = cr.rgb[ch](y, x) * a + f * (1.f - a);
      }
    }
  return out;
}

FRSample make_fr_sample(const SampleRecord& a, const SampleRecord& b, const FRConfig& cfg, Rng& rng,
                        const Frame* rendered_b) {
  const int H = b.frame.height(), W = b.frame.width();
  const Box box_a = face_box(a.pose.keypoints, a.frame.height(), a.frame.width());
  const Box box_b = face_box(b.pose.keypoints, H, W);
  FRSample s;
  s.target = crop_face(b.frame, box_b, cfg.crop);
  s.c0 = rendered_b ? crop_face(*rendered_b, box_b, cfg.crop) : degrade(s.target, cfg, rng);
  s.identity = crop_face(a.frame, box_a, cfg.crop);
  return s;
}

std::vector<FRSample> make_fr_batch(const Dataset& ds, const FRConfig& cfg, Rng& rng, const FrameRenderer& render) {
  std::vector<FRSample> batch;
  int failures = 0;
  while (int(batch.size()) < cfg.batch) {
    auto [a, b] = sample_training_pair(ds, cfg.window, rng);
    try {
      if (render) {
        const Frame rendered = render(*a, *b);
        batch.push_back(make_fr_sample(*a, *b, cfg, rng, &rendered));
      } else {
        batch.push_back(make_fr_sample(*a, *b, cfg, rng));
      }
    } catch (const NoFaceError&) {
      if (++failures > 100 * cfg.batch) throw ExhaustionError("no frames with a visible face");
    }
  }
  return batch;
}

FRModel::FRModel(FRConfig cfg, const Providers& providers, std::uint64_t seed)
    : cfg_(std::move(cfg)), providers_(providers), rng_(seed) {
  net_ = std::make_unique<FRNetwork<float>>(cfg_, providers_.config().face_dim, rng_);
  disc_ = std::make_unique<PatchDiscriminator<float>>(3, cfg_.ndf, rng_);
  opt_g_ = std::make_unique<nn::Adam<float>>(net_->parameters(), cfg_.adam);
  opt_d_ = std::make_unique<nn::Adam<float>>(disc_->parameters(), cfg_.adam);
}

FROutput FRModel::forward(const Frame& c0, const Eigen::VectorXf& identity_embedding) {
  nn::NoGradGuard guard;
  net_->set_training(false);
  Tensor<float> id(Shape{1, int(identity_embedding.size()), 1, 1});
  std::copy(identity_embedding.data(), identity_embedding.data() + identity_embedding.size(), id.ptr(0));
  const auto r = (*net_)(Var<float>::constant(nn::frame_to_tensor<float>(c0)), Var<float>::constant(id));
  return {nn::tensor_to_frame(r.crop.value()), nn::tensor_to_mask(r.mask.value())};
}

LossReport FRModel::train_step(const std::vector<FRSample>& batch) {
  std::vector<const Frame*> c0s, targets, ids;
  for (const auto& s : batch) {
    c0s.push_back(&s.c0);
    targets.push_back(&s.target);
    ids.push_back(&s.identity);
  }
  const int D = providers_.config().face_dim;
  Tensor<float> id(Shape{int(batch.size()), D, 1, 1});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Eigen::VectorXf e = providers_.face_embed(batch[n].identity);
    std::copy(e.data(), e.data() + D, id.ptr(int(n)));
  }
  net_->set_training(true);
  disc_->set_training(true);
  const Var<float> c0 = Var<float>::constant(nn::frames_to_tensor<float>(c0s));
  const Var<float> target = Var<float>::constant(nn::frames_to_tensor<float>(targets));
  const Var<float> c_identity = Var<float>::constant(nn::frames_to_tensor<float>(ids));

  const auto r = (*net_)(c0, Var<float>::constant(id));
  // The crop that lands in the frame: generated pixels where the mask is on.
  const Var<float> out = nn::add(nn::mul_channels(r.crop, r.mask),
                                 nn::mul_channels(c0, nn::add_scalar(nn::scale(r.mask, -1.f), 1.f)));
  disc_->set_requires_grad(false);
  const Var<float> adv = loss_hinge_g<float>({d_output((*disc_)(out))});
  disc_->set_requires_grad(true);
  const Var<float> facep = loss_facep(c_identity, out, providers_.face_embedder());
  const Var<float> rec = nn::mean_abs_diff(out, target);
  const Var<float> reg = nn::mean(r.mask);
  const Var<float> total =
      nn::add(nn::add(nn::scale(facep, float(cfg_.lambda_facep)), nn::scale(rec, float(cfg_.lambda_rec))),
              nn::add(nn::scale(reg, float(cfg_.lambda_mask_reg)), nn::scale(adv, float(cfg_.lambda_adv))));
  LossReport report;
  report.add("g_total", total.item());
  report.add("facep", facep.item());
  report.add("rec", rec.item());
  report.add("mask_reg", reg.item());
  report.add("hinge_g", adv.item());
  check_finite(report, "fr generator");
  opt_g_->zero_grad();
  total.backward();
  opt_g_->step();

  const Var<float> d_loss = loss_hinge_d<float>({d_output((*disc_)(target))}, {d_output((*disc_)(out.detach()))});
  report.add("d_hinge", d_loss.item());
  check_finite(report, "fr discriminator");
  opt_d_->zero_grad();
  d_loss.backward();
  opt_d_->step();
  return report;
}

template class FRNetwork<float>;
template class FRNetwork<double>;
template Var<float> loss_facep(const Var<float>&, const Var<float>&, const ToyEmbedder<float>&, int);
template Var<double> loss_facep(const Var<double>&, const Var<double>&, const ToyEmbedder<double>&, int);

}  // namespace reenact
