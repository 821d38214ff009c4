#include "reenact/core.hpp"

#include <algorithm>

namespace reenact {

const LabelSpace& LabelSpace::standard() {
  static const LabelSpace space{
      {"background", "hair", "face", "torso-skin", "upper-clothes", "coat", "dress", "pants",
       "skirt", "left-arm", "right-arm", "left-leg", "right-leg", "left-shoe", "right-shoe",
       "socks", "hat", "glove", "scarf", "sunglasses", "left-hand", "right-hand"},
      {"eyebrows", "eyes", "nose", "lips", "inner-mouth"}};
  return space;
}

std::string_view LabelSpace::name(int id) const {
  if (id >= 0 && id < body_count()) return body_labels[id];
  if (id >= body_count() && id < total_count()) return face_labels[id - body_count()];
  throw InvalidLabelError("label id " + std::to_string(id) + " outside label space");
}

void Frame::clamp() {
  for (auto& p : rgb) p = p.max(0.f).min(1.f);
}

const Keypoint* PoseBundle::find(std::string_view name) const {
  for (const auto& k : keypoints)
    if (k.name == name) return &k;
  return nullptr;
}

std::vector<Plane> one_hot(const SemanticMap& map, int n_labels) {
  if (n_labels <= 0) throw InvalidLabelError("one_hot needs at least one label");
  const int max_label = map.labels.size() ? int(map.labels.maxCoeff()) : 0;
  if (max_label >= n_labels)
    throw InvalidLabelError("label " + std::to_string(max_label) + " >= " + std::to_string(n_labels));
  std::vector<Plane> out(n_labels);
  for (int c = 0; c < n_labels; ++c)
    out[c] = (map.labels == std::uint8_t(c)).cast<float>();
  return out;
}

SemanticMap argmax(const std::vector<Plane>& channels) {
  if (channels.empty()) throw ShapeError("argmax over zero channels");
  const auto h = channels[0].rows(), w = channels[0].cols();
  SemanticMap out{int(h), int(w)};
  Plane best = channels[0];
  for (std::size_t c = 1; c < channels.size(); ++c) {
    if (channels[c].rows() != h || channels[c].cols() != w) throw ShapeError("argmax channel dims differ");
    const auto better = (channels[c] > best).eval();
    out.labels = better.select(LabelPlane::Constant(h, w, std::uint8_t(c)), out.labels);
    best = better.select(channels[c], best);
  }
  return out;
}

BlendMask binarize(const SemanticMap& map) {
  return BlendMask((map.labels != std::uint8_t(kBackground)).cast<float>());
}

Frame blend(const Frame& z, const BlendMask& m, const Frame& b) {
  const int h = z.height(), w = z.width();
  if (!b.same_dims(h, w) || m.height() != h || m.width() != w)
    throw ShapeError("blend: z, m and b must share spatial dims");
  Frame f;
  for (int c = 0; c < 3; ++c) f.rgb[c] = blend(z.rgb[c], m.alpha, b.rgb[c]).max(0.f).min(1.f);
  return f;
}

std::vector<int> label_histogram(const SemanticMap& map, int n_labels) {
  std::vector<int> h(n_labels, 0);
  for (Eigen::Index i = 0; i < map.labels.size(); ++i) {
    const int l = map.labels.data()[i];
    if (l >= n_labels) throw InvalidLabelError("label outside histogram range");
    ++h[l];
  }
  return h;
}

}  // namespace reenact
