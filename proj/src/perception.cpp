#include "reenact/perception.hpp"

#include "reenact/nn/convert.hpp"

#include <algorithm>
#include <cmath>

namespace reenact {

using nn::Shape;
using nn::Tensor;
using nn::Var;

EmbedderSpec EmbedderSpec::standard(int dims) {
  EmbedderSpec s;
  s.layers = {{"s1", 8, 3, 1}, {"s4", 16, 4, 4}, {"s16", 32, 4, 4}};
  s.dims = dims;
  return s;
}

namespace {

template <typename S>
double clip_frobenius(Tensor<S>& w, float cap) {
  const double norm = std::sqrt((w.data.template cast<double>().square()).sum());
  if (norm > cap) {
    w.data *= S(cap / norm);
    return cap;
  }
  return norm;
}

}  // namespace

template <typename S>
ToyEmbedder<S>::ToyEmbedder(EmbedderKind kind, EmbedderSpec spec, std::uint64_t seed)
    : kind_(kind), spec_(std::move(spec)) {
  if (spec_.layers.empty()) throw ConfigError("embedder layer spec is empty");
  if (spec_.dims <= 0) throw ConfigError("embedder dims must be positive");
  nn::Rng rng(seed);
  int in = 3;
  lipschitz_ = 1.0;
  for (const auto& l : spec_.layers) {
    if (l.channels <= 0 || l.kernel <= 0 || l.stride <= 0) throw ConfigError("bad embedder layer " + l.name);
    // He scaling keeps the ReLU activations at a usable magnitude through the
    // stack; the cap below still bounds each layer.
    Tensor<S> w = nn::uniform_init<S>(Shape{l.channels, in, l.kernel, l.kernel}, in * l.kernel * l.kernel, rng);
    w.data *= S(std::sqrt(6.0));
    const double norm = clip_frobenius(w, spec_.weight_norm);
    lipschitz_ *= norm * double((l.kernel + l.stride - 1) / l.stride);
    weights_.push_back(Var<S>::constant(std::move(w)));
    biases_.push_back(Var<S>::constant(Tensor<S>(Shape{1, l.channels, 1, 1})));
    in = l.channels;
  }
  Tensor<S> p = nn::uniform_init<S>(Shape{1, 1, spec_.dims, in}, in, rng);
  p.shape = Shape{spec_.dims, in, 1, 1};
  lipschitz_ *= clip_frobenius(p, spec_.weight_norm);
  proj_w_ = Var<S>::constant(std::move(p));
  proj_b_ = Var<S>::constant(Tensor<S>(Shape{1, spec_.dims, 1, 1}));
}

template <typename S>
EmbedderOutput<S> ToyEmbedder<S>::operator()(const Var<S>& images) const {
  if (images.shape().c != 3) throw ShapeError("embedder expects 3-channel images, got " + images.shape().str());
  EmbedderOutput<S> out;
  Var<S> x = nn::add_scalar(images, S(-0.5));
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const int pad = l.stride == 1 ? l.kernel / 2 : 0;
    x = nn::relu(nn::conv2d(x, weights_[i], biases_[i], l.stride, pad));
    out.taps.push_back(x);
  }
  out.embedding = nn::conv2d(nn::spatial_mean(x), proj_w_, proj_b_, 1, 0);
  return out;
}

template <typename S>
Eigen::VectorXf ToyEmbedder<S>::embed(const Frame& image) const {
  nn::NoGradGuard guard;
  const auto out = (*this)(Var<S>::constant(nn::frame_to_tensor<S>(image)));
  return out.embedding.value().data.template cast<float>().matrix();
}

template <typename S>
std::vector<std::string> ToyEmbedder<S>::tap_names() const {
  std::vector<std::string> names;
  for (const auto& l : spec_.layers) names.push_back(l.name);
  return names;
}

template <typename S>
std::vector<int> ToyEmbedder<S>::tap_strides() const {
  std::vector<int> s;
  int acc = 1;
  for (const auto& l : spec_.layers) s.push_back(acc *= l.stride);
  return s;
}

template <typename S>
template <typename T>
ToyEmbedder<T> ToyEmbedder<S>::cast() const {
  ToyEmbedder<T> e;
  e.kind_ = kind_;
  e.spec_ = spec_;
  e.lipschitz_ = lipschitz_;
  for (const auto& w : weights_) e.weights_.push_back(Var<T>::constant(w.value().template cast<T>()));
  for (const auto& b : biases_) e.biases_.push_back(Var<T>::constant(b.value().template cast<T>()));
  e.proj_w_ = Var<T>::constant(proj_w_.value().template cast<T>());
  e.proj_b_ = Var<T>::constant(proj_b_.value().template cast<T>());
  return e;
}

template class ToyEmbedder<float>;
template class ToyEmbedder<double>;
template ToyEmbedder<double> ToyEmbedder<float>::cast<double>() const;
template ToyEmbedder<float> ToyEmbedder<double>::cast<float>() const;

ProviderConfig ProviderConfig::from(const Config& c) {
  ProviderConfig p;
  p.face_dim = c.get("providers.face_embed.dim", p.face_dim);
  p.image_dim = c.get("providers.image_embed.dim", p.image_dim);
  p.face_seed = std::uint64_t(c.get("providers.face_embed.seed", int(p.face_seed)));
  p.image_seed = std::uint64_t(c.get("providers.image_embed.seed", int(p.image_seed)));
  if (p.face_dim <= 0 || p.image_dim <= 0) throw ConfigError("provider dims must be positive");
  return p;
}

Providers::Providers(ProviderConfig config)
    : config_(config),
      face_(EmbedderKind::kFace, EmbedderSpec::standard(config.face_dim), config.face_seed),
      image_(EmbedderKind::kImage, EmbedderSpec::standard(config.image_dim), config.image_seed) {}

SemanticMap Providers::hp(const SampleRecord& r) const {
  ++hp_;
  return r.parsing;
}

Frame Providers::dp(const SampleRecord& r) const {
  ++dp_;
  return r.pose.dense_render;
}

PoseBundle Providers::op(const SampleRecord& r) const {
  ++op_;
  PoseBundle p;
  p.keypoints = r.pose.keypoints;
  p.stick_render = render_stick_figure(p.keypoints, r.frame.height(), r.frame.width());
  return p;
}

Frame Providers::inpaint(const SampleRecord& r, const BlendMask& mask) const {
  ++inpaint_;
  if (r.background.height() == 0) throw UnsupportedError("inpainting needs a synthetic record with a background layer");
  if (!r.background.same_dims(mask.height(), mask.width()) || !r.frame.same_dims(mask.height(), mask.width()))
    throw ShapeError("inpaint mask does not match the image");
  return blend(r.background, mask, r.frame);
}

Eigen::VectorXf Providers::face_embed(const Frame& image) const {
  ++face_embed_;
  return face_.embed(image);
}

Eigen::VectorXf Providers::image_embed(const Frame& image) const {
  ++image_embed_;
  return image_.embed(image);
}

Box Providers::face_align(const PoseBundle& pose, int height, int width) const {
  ++align_;
  return face_box(pose.keypoints, height, width);
}

CallCounts Providers::counts() const {
  return {hp_.load(), dp_.load(), op_.load(), face_embed_.load(), image_embed_.load(), inpaint_.load(), align_.load()};
}

void Providers::reset_counts() {
  for (auto* c : {&hp_, &dp_, &op_, &face_embed_, &image_embed_, &inpaint_, &align_}) c->store(0);
}

Box face_box(const std::vector<Keypoint>& landmarks, int height, int width, float margin) {
  if (margin < 0.f) throw ConfigError("face box margin must be non-negative");
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int n = 0;
  for (const auto& k : landmarks) {
    if (!k.visible || k.name.rfind("face_", 0) != 0) continue;
    if (n == 0) {
      x0 = x1 = k.x;
      y0 = y1 = k.y;
    }
    x0 = std::min(x0, k.x);
    x1 = std::max(x1, k.x);
    y0 = std::min(y0, k.y);
    y1 = std::max(y1, k.y);
    ++n;
  }
  if (n < 2) throw NoFaceError("fewer than two visible face landmarks");
  // Integer pixel extent holding every landmark, squared up and padded.
  const int ix0 = int(std::floor(x0)), iy0 = int(std::floor(y0));
  const int ix1 = int(std::floor(x1)) + 1, iy1 = int(std::floor(y1)) + 1;
  const int tight = std::max(ix1 - ix0, iy1 - iy0);
  int side = tight + 2 * int(std::lround(margin * float(tight)));
  side = std::min({side, height, width});
  auto place = [side](int lo, int hi, int limit) {
    int start = (lo + hi - side) / 2;
    return std::clamp(start, 0, limit - side);
  };
  Box b;
  b.x0 = place(ix0, ix1, width);
  b.y0 = place(iy0, iy1, height);
  b.x1 = b.x0 + side;
  b.y1 = b.y0 + side;
  return b;
}

}  // namespace reenact
