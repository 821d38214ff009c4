#include "reenact/b2f.hpp"

#include "reenact/augment.hpp"
#include "reenact/nn/convert.hpp"

#include <algorithm>
#include <cmath>

namespace reenact {

using nn::Shape;
using nn::Tensor;
using nn::Var;

const std::array<std::vector<std::uint8_t>, kPartCount>& part_groups() {
  static const std::array<std::vector<std::uint8_t>, kPartCount> groups{{
      {kHair, kFace, kHat, kSunglasses},
      {kUpperClothes, kCoat, kDress, kScarf},
      {kPants, kSkirt},
      {kLeftShoe, kRightShoe, kSocks},
      {kFace, kTorsoSkin, kLeftArm, kRightArm, kLeftLeg, kRightLeg},
  }};
  return groups;
}

namespace {

bool in_group(std::uint8_t l, const std::vector<std::uint8_t>& g) { return std::find(g.begin(), g.end(), l) != g.end(); }

// Group pixels of the image on a square box around their extent, bilinearly
// resampled to size x size. Everything outside the group or the frame is zero.
Frame group_crop(const Frame& image, const SemanticMap& map, const std::vector<std::uint8_t>& group, int size,
                 bool* empty) {
  const int H = map.height(), W = map.width();
  int x0 = W, y0 = H, x1 = -1, y1 = -1;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (in_group(map(y, x), group)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  Frame out(size, size);
  *empty = x1 < 0;
  if (*empty) return out;
  const double side = std::max(x1 - x0 + 1, y1 - y0 + 1);
  const double ox = 0.5 * (x0 + x1 + 1) - 0.5 * side, oy = 0.5 * (y0 + y1 + 1) - 0.5 * side;
  auto sample = [&](int c, int y, int x) -> float {
    if (x < 0 || y < 0 || x >= W || y >= H || !in_group(map(y, x), group)) return 0.f;
    return image.rgb[c](y, x);
  };
  const double step = side / size;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double sx = ox + (j + 0.5) * step - 0.5, sy = oy + (i + 0.5) * step - 0.5;
      const int fx = int(std::floor(sx)), fy = int(std::floor(sy));
      const float ax = float(sx - fx), ay = float(sy - fy);
      for (int c = 0; c < 3; ++c)
        out.rgb[c](i, j) = (1 - ay) * ((1 - ax) * sample(c, fy, fx) + ax * sample(c, fy, fx + 1)) +
                           ay * ((1 - ax) * sample(c, fy + 1, fx) + ax * sample(c, fy + 1, fx + 1));
    }
  return out;
}

}  // namespace

IdentityCrops part_extract(const Frame& image, const SemanticMap& p_star, int size) {
  if (!image.same_dims(p_star.height(), p_star.width())) throw ShapeError("image and parsing differ in size");
  if (size <= 0) throw ConfigError("crop size must be positive");
  const auto& groups = part_groups();
  IdentityCrops out;
  for (int g = 0; g < 4; ++g) out.crops[g] = group_crop(image, p_star, groups[g], size, &out.empty[g]);
  if (out.empty[0]) throw NoFaceError("no face or hair pixels to extract");

  std::array<std::vector<float>, 3> skin;
  for (int y = 0; y < p_star.height(); ++y)
    for (int x = 0; x < p_star.width(); ++x)
      if (in_group(p_star(y, x), groups[4]))
        for (int c = 0; c < 3; ++c) skin[c].push_back(image.rgb[c](y, x));
  out.crops[4] = Frame(size, size);
  out.empty[4] = skin[0].empty();
  if (!out.empty[4])
    for (int c = 0; c < 3; ++c) {
      // Lower median for even counts keeps the value one of the observed colors.
      auto& v = skin[c];
      auto mid = v.begin() + (v.size() - 1) / 2;
      std::nth_element(v.begin(), mid, v.end());
      out.crops[4].rgb[c].setConstant(*mid);
    }
  return out;
}

Eigen::VectorXf embed_identity(const IdentityCrops& crops, const Providers& providers) {
  const ProviderConfig& pc = providers.config();
  Eigen::VectorXf e(identity_dim(pc));
  const Eigen::VectorXf f = providers.face_embed(crops.crops[0]);
  if (f.size() != pc.face_dim) throw ConfigError("face embedding has unexpected dimension");
  e.head(pc.face_dim) = f;
  for (int i = 1; i < kPartCount; ++i) {
    const Eigen::VectorXf v = providers.image_embed(crops.crops[i]);
    if (v.size() != pc.image_dim) throw ConfigError("image embedding has unexpected dimension");
    e.segment(pc.face_dim + (i - 1) * pc.image_dim, pc.image_dim) = v;
  }
  return e;
}

PersonIdentity make_identity(const Frame& image, const SemanticMap& p_star, const Providers& providers) {
  PersonIdentity id;
  id.crops = part_extract(image, p_star);
  id.e_z = embed_identity(id.crops, providers);
  return id;
}

int B2FConfig::stages() const {
  int k = 0;
  while ((4 << k) < std::max(height, width)) ++k;
  return k;
}

B2FConfig B2FConfig::from(const Config& c) {
  B2FConfig b;
  b.height = c.get("resolution.height", b.height);
  b.width = c.get("resolution.width", b.width);
  b.ngf = c.get("b2f.ngf", b.ngf);
  b.max_channels = c.get("b2f.max_channels", b.max_channels);
  b.spade_hidden = c.get("b2f.spade_hidden", b.spade_hidden);
  b.ndf = c.get("b2f.ndf", b.ndf);
  b.lambda_hinge = c.get("b2f.lambda_hinge", b.lambda_hinge);
  b.lambda_fm = c.get("b2f.lambda_fm", b.lambda_fm);
  b.lambda_perceptual = c.get("b2f.lambda_perceptual", b.lambda_perceptual);
  b.lambda_face = c.get("b2f.lambda_face", b.lambda_face);
  b.lambda_mask = c.get("b2f.lambda_mask", b.lambda_mask);
  b.adam.lr = c.get("b2f.lr", b.adam.lr);
  b.adam.beta1 = c.get("b2f.beta1", b.adam.beta1);
  b.adam.beta2 = c.get("b2f.beta2", b.adam.beta2);
  b.batch = c.get("b2f.batch", b.batch);
  b.window = c.get("b2f.window", b.window);
  if (b.height < 4 || b.width < 4) throw ConfigError("resolution too small");
  if (b.ngf <= 0 || b.max_channels <= 0 || b.spade_hidden <= 0 || b.ndf <= 0 || b.batch <= 0)
    throw ConfigError("b2f sizes must be positive");
  return b;
}

Config B2FConfig::to_config() const {
  Config c;
  c.set("resolution.height", double(height));
  c.set("resolution.width", double(width));
  c.set("b2f.ngf", double(ngf));
  c.set("b2f.max_channels", double(max_channels));
  c.set("b2f.spade_hidden", double(spade_hidden));
  c.set("b2f.ndf", double(ndf));
  c.set("b2f.lambda_hinge", lambda_hinge);
  c.set("b2f.lambda_fm", lambda_fm);
  c.set("b2f.lambda_perceptual", lambda_perceptual);
  c.set("b2f.lambda_face", lambda_face);
  c.set("b2f.lambda_mask", lambda_mask);
  c.set("b2f.lr", adam.lr);
  c.set("b2f.beta1", adam.beta1);
  c.set("b2f.beta2", adam.beta2);
  c.set("b2f.batch", double(batch));
  c.set("b2f.window", double(window));
  return c;
}

template <typename S>
Spade<S>::Spade(int channels, int labels, int hidden, nn::Rng& rng)
    : norm_(channels, false),
      shared_(labels, hidden, 3, 1, 1, rng),
      gamma_(hidden, channels, 3, 1, 1, rng),
      beta_(hidden, channels, 3, 1, 1, rng) {
  this->register_module("shared", shared_);
  this->register_module("gamma", gamma_);
  this->register_module("beta", beta_);
}

template <typename S>
Var<S> Spade<S>::operator()(const Var<S>& x, const Var<S>& seg) const {
  const Var<S> h = nn::relu(shared_(seg));
  return nn::add(nn::mul(norm_(x), nn::add_scalar(gamma_(h), S(1))), beta_(h));
}

template <typename S>
B2FGenerator<S>::B2FGenerator(const B2FConfig& cfg, int identity_dim, nn::Rng& rng)
    : cfg_(cfg), identity_dim_(identity_dim) {
  const int k = cfg.stages();
  auto channels = [&](int level) { return std::min(cfg.max_channels, cfg.ngf << level); };
  base_channels_ = channels(k);
  fc_ = std::make_unique<nn::Linear<S>>(identity_dim, base_channels_ * 16, rng);
  this->register_module("fc", *fc_);
  for (int i = 0; i < k; ++i) {
    const int in = channels(k - i), out = channels(k - 1 - i);
    convs_.push_back(std::make_unique<nn::Conv2d<S>>(in, out, 3, 1, 1, rng));
    spades_.push_back(std::make_unique<Spade<S>>(out, kConditionLabelCount, cfg.spade_hidden, rng));
    this->register_module("up" + std::to_string(i), *convs_.back());
    this->register_module("spade" + std::to_string(i), *spades_.back());
  }
  image_head_ = std::make_unique<nn::Conv2d<S>>(channels(0), 3, 3, 1, 1, rng);
  mask_head_ = std::make_unique<nn::Conv2d<S>>(channels(0), 1, 3, 1, 1, rng);
  this->register_module("image_head", *image_head_);
  this->register_module("mask_head", *mask_head_);
}

template <typename S>
Var<S> B2FGenerator<S>::project(const Var<S>& e_z) const {
  const Shape s = e_z.shape();
  if (s.sample() != identity_dim_)
    throw ConfigError("identity embedding has " + std::to_string(s.sample()) + " entries, generator expects " +
                      std::to_string(identity_dim_));
  return nn::reshape((*fc_)(e_z), Shape{s.n, base_channels_, 4, 4});
}

template <typename S>
B2FResult<S> B2FGenerator<S>::decode(const Var<S>& cond, const Var<S>& base) const {
  const int side = cfg_.canvas();
  const Shape cs = cond.shape();
  if (cs.c != kConditionLabelCount || cs.h != side || cs.w != side)
    throw ShapeError("condition tensor " + cs.str() + " does not match the decoder canvas");
  Var<S> x = base;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = (*convs_[i])(nn::upsample_nearest2(x));
    const int res = x.shape().h;
    const Var<S> seg = res == side ? cond : nn::resize_nearest(cond, res, res);
    x = nn::leaky_relu((*spades_[i])(x, seg), S(0.2));
  }
  x = nn::crop(x, (side - cfg_.height) / 2, (side - cfg_.width) / 2, cfg_.height, cfg_.width);
  return {nn::sigmoid((*image_head_)(x)), nn::sigmoid((*mask_head_)(x))};
}

template <typename S>
Tensor<S> b2f_condition(const std::vector<const SemanticMap*>& maps, const B2FConfig& cfg) {
  if (maps.empty()) throw ShapeError("no condition maps");
  const int side = cfg.canvas(), oy = (side - cfg.height) / 2, ox = (side - cfg.width) / 2;
  Tensor<S> t(Shape{int(maps.size()), kConditionLabelCount, side, side});
  for (std::size_t n = 0; n < maps.size(); ++n) {
    const SemanticMap& m = *maps[n];
    if (m.height() != cfg.height || m.width() != cfg.width)
      throw ShapeError("condition map is " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                       ", expected " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    t.plane(int(n), kBackground).setConstant(S(1));
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) {
        const int l = m(y, x);
        if (l >= kConditionLabelCount) throw InvalidLabelError("label " + std::to_string(l) + " outside 27");
        t.at(int(n), kBackground, y + oy, x + ox) = S(0);
        t.at(int(n), l, y + oy, x + ox) = S(1);
      }
  }
  return t;
}

template <typename S>
Var<S> loss_perceptual(const Var<S>& x, const Var<S>& o, const ToyEmbedder<S>& embedder) {
  if (x.shape() != o.shape()) throw ShapeError("perceptual loss on " + x.shape().str() + " vs " + o.shape().str());
  const auto tx = embedder(x).taps, to = embedder(o).taps;
  Var<S> total;
  for (std::size_t j = 0; j < tx.size(); ++j) {
    const Var<S> l = nn::mean_abs_diff(to[j], tx[j]);
    total = total.defined() ? nn::add(total, l) : l;
  }
  return total;
}

template <typename S>
Var<S> loss_face_emphasis(const Var<S>& frame, const Var<S>& gt_frame, const std::vector<Box>& boxes,
                          const ToyEmbedder<S>& embedder, bool* flagged, int crop_size) {
  if (frame.shape() != gt_frame.shape()) throw ShapeError("face loss on frames of different shape");
  if (int(boxes.size()) != frame.shape().n) throw ShapeError("face loss needs one box per sample");
  std::vector<int> keep;
  std::vector<std::array<float, 4>> rois;
  for (std::size_t n = 0; n < boxes.size(); ++n) {
    const Box& b = boxes[n];
    if (!b.valid || b.empty()) continue;
    keep.push_back(int(n));
    rois.push_back({float(b.x0), float(b.y0), float(b.x1), float(b.y1)});
  }
  if (flagged) *flagged = keep.empty();
  if (keep.empty()) return Var<S>::constant(Tensor<S>(Shape{1, 1, 1, 1}, S(0)));
  const Var<S> c = nn::crop_resize(nn::select_batch(frame, keep), rois, crop_size, crop_size);
  const Var<S> g = nn::crop_resize(nn::select_batch(gt_frame, keep), rois, crop_size, crop_size);
  return loss_perceptual(g, c, embedder);
}

template <typename S>
Var<S> loss_mask(const Var<S>& m, const std::vector<const SemanticMap*>& parsing_gt, double lambda) {
  std::vector<BlendMask> bins;
  for (const auto* p : parsing_gt) bins.push_back(binarize(*p));
  std::vector<const BlendMask*> ptrs;
  for (const auto& b : bins) ptrs.push_back(&b);
  const Var<S> target = Var<S>::constant(nn::masks_to_tensor<S>(ptrs));
  if (target.shape() != m.shape()) throw ShapeError("mask " + m.shape().str() + " vs parsing " + target.shape().str());
  return nn::scale(nn::mean_abs_diff(m, target), S(lambda));
}

const Eigen::VectorXf& IdentityCache::get(const SampleRecord& r) {
  const auto key = std::make_pair(r.person_id, r.frame_index);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, make_identity(r.frame, r.parsing, providers_).e_z).first;
  return it->second;
}

B2FSample make_b2f_sample(const SampleRecord& a, const SampleRecord& b, IdentityCache& identities) {
  B2FSample s;
  s.cond = inject_face_labels(inject_hand_labels(b.parsing, b.pose.keypoints), b.pose.keypoints);
  s.e_z = identities.get(a);
  s.gt_frame = b.frame;
  s.gt_parsing = b.parsing;
  s.background = b.background;
  try {
    s.face = face_box(b.pose.keypoints, b.parsing.height(), b.parsing.width());
  } catch (const NoFaceError&) {
    s.face = Box{0, 0, 0, 0, false};
  }
  return s;
}

std::vector<B2FSample> make_b2f_batch(const Dataset& ds, const B2FConfig& cfg, IdentityCache& identities, Rng& rng) {
  std::vector<B2FSample> batch;
  for (int i = 0; i < cfg.batch; ++i) {
    auto [a, b] = sample_training_pair(ds, cfg.window, rng);
    batch.push_back(make_b2f_sample(*a, *b, identities));
  }
  return batch;
}

namespace {

Tensor<float> identity_tensor(const std::vector<const Eigen::VectorXf*>& e) {
  const int d = int(e[0]->size());
  Tensor<float> t(Shape{int(e.size()), d, 1, 1});
  for (std::size_t n = 0; n < e.size(); ++n) {
    if (e[n]->size() != d) throw ConfigError("identity embeddings of different size in one batch");
    std::copy(e[n]->data(), e[n]->data() + d, t.ptr(int(n)));
  }
  return t;
}

}  // namespace

B2FModel::B2FModel(B2FConfig cfg, const Providers& providers, std::uint64_t seed)
    : cfg_(std::move(cfg)), providers_(providers), rng_(seed) {
  gen_ = std::make_unique<B2FGenerator<float>>(cfg_, identity_dim(providers_.config()), rng_);
  disc_ = std::make_unique<MultiScaleDiscriminator<float>>(3 + kConditionLabelCount, cfg_.ndf, rng_);
  opt_g_ = std::make_unique<nn::Adam<float>>(gen_->parameters(), cfg_.adam);
  opt_d_ = std::make_unique<nn::Adam<float>>(disc_->parameters(), cfg_.adam);
}

Tensor<float> B2FModel::project(const Eigen::VectorXf& e_z) {
  nn::NoGradGuard guard;
  return gen_->project(Var<float>::constant(identity_tensor({&e_z}))).value();
}

B2FOutput B2FModel::decode(const SemanticMap& cond, const Tensor<float>& base) {
  nn::NoGradGuard guard;
  gen_->set_training(false);
  const auto r = gen_->decode(Var<float>::constant(b2f_condition<float>({&cond}, cfg_)), Var<float>::constant(base));
  return {nn::tensor_to_frame(r.image.value()), nn::tensor_to_mask(r.mask.value())};
}

LossReport B2FModel::train_step(const std::vector<B2FSample>& batch) {
  std::vector<const SemanticMap*> conds, gts;
  std::vector<const Eigen::VectorXf*> ids;
  std::vector<const Frame*> frames;
  std::vector<BlendMask> bins;
  std::vector<Box> boxes;
  for (const auto& s : batch) {
    conds.push_back(&s.cond);
    gts.push_back(&s.gt_parsing);
    ids.push_back(&s.e_z);
    frames.push_back(&s.gt_frame);
    bins.push_back(binarize(s.gt_parsing));
    boxes.push_back(s.face);
  }
  std::vector<const BlendMask*> bin_ptrs;
  for (const auto& b : bins) bin_ptrs.push_back(&b);
  gen_->set_training(true);
  disc_->set_training(true);

  const Var<float> cond = Var<float>::constant(b2f_condition<float>(conds, cfg_));
  const Var<float> cond_d = Var<float>::constant(nn::maps_to_one_hot<float>(conds, kConditionLabelCount));
  const Var<float> figure = Var<float>::constant(nn::masks_to_tensor<float>(bin_ptrs));
  const Var<float> x = Var<float>::constant(nn::frames_to_tensor<float>(frames));
  const Var<float> x_b = nn::mul_channels(x, figure);

  const B2FResult<float> out = (*gen_)(cond, Var<float>::constant(identity_tensor(ids)));
  const Var<float> z_b = nn::mul_channels(out.image, figure);
  std::vector<std::vector<Var<float>>> real_acts;
  {
    nn::NoGradGuard guard;
    real_acts = (*disc_)(nn::concat_channels<float>({x_b, cond_d}));
  }
  disc_->set_requires_grad(false);
  const auto fake_acts = (*disc_)(nn::concat_channels<float>({z_b, cond_d}));
  disc_->set_requires_grad(true);
  std::vector<Var<float>> fake_out;
  for (const auto& a : fake_acts) fake_out.push_back(d_output(a));

  bool no_face = false;
  const Var<float> hinge = loss_hinge_g(fake_out);
  const Var<float> fm = loss_fm_b2f(real_acts, fake_acts);
  const Var<float> perc = loss_perceptual(x_b, z_b, providers_.image_embedder());
  const Var<float> face = loss_face_emphasis(z_b, x_b, boxes, providers_.face_embedder(), &no_face);
  const Var<float> mask = loss_mask(out.mask, gts, cfg_.lambda_mask);
  const Var<float> total = nn::add(
      nn::add(nn::add(nn::scale(hinge, float(cfg_.lambda_hinge)), nn::scale(fm, float(cfg_.lambda_fm))),
              nn::add(nn::scale(perc, float(cfg_.lambda_perceptual)), nn::scale(face, float(cfg_.lambda_face)))),
      mask);
  LossReport report;
  report.add("g_total", total.item());
  report.add("hinge_g", hinge.item());
  report.add("fm", fm.item());
  report.add("perceptual", perc.item());
  report.add("face", face.item());
  report.add("mask", mask.item());
  report.add("face_skipped", no_face ? 1.0 : 0.0);
  check_finite(report, "b2f generator");
  opt_g_->zero_grad();
  total.backward();
  opt_g_->step();

  const auto d_real = (*disc_)(nn::concat_channels<float>({x_b, cond_d}));
  const auto d_fake = (*disc_)(nn::concat_channels<float>({z_b.detach(), cond_d}));
  std::vector<Var<float>> real_out, fake_d;
  for (const auto& a : d_real) real_out.push_back(d_output(a));
  for (const auto& a : d_fake) fake_d.push_back(d_output(a));
  const Var<float> d_loss = loss_hinge_d(real_out, fake_d);
  report.add("d_hinge", d_loss.item());
  check_finite(report, "b2f discriminator");
  opt_d_->zero_grad();
  d_loss.backward();
  opt_d_->step();
  return report;
}

#define REENACT_INSTANTIATE_B2F(S)                                                                            \
  template class Spade<S>;                                                                                    \
  template class B2FGenerator<S>;                                                                             \
  template Tensor<S> b2f_condition(const std::vector<const SemanticMap*>&, const B2FConfig&);                 \
  template Var<S> loss_perceptual(const Var<S>&, const Var<S>&, const ToyEmbedder<S>&);                       \
  template Var<S> loss_face_emphasis(const Var<S>&, const Var<S>&, const std::vector<Box>&,                   \
                                     const ToyEmbedder<S>&, bool*, int);                                      \
  template Var<S> loss_mask(const Var<S>&, const std::vector<const SemanticMap*>&, double);

REENACT_INSTANTIATE_B2F(float)
REENACT_INSTANTIATE_B2F(double)

}  // namespace reenact
