#include "reenact/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace reenact {

AugmentConfig AugmentConfig::from(const Config& c) {
  AugmentConfig a;
  a.squeeze_range = c.get_range("augment.squeeze_range", a.squeeze_range);
  a.rot_deg = c.get("augment.rot_deg", a.rot_deg);
  a.scale_range = c.get_range("augment.scale_range", a.scale_range);
  if (a.squeeze_range.first <= 0.0) throw ConfigError("augment.squeeze_range must be positive");
  if (a.scale_range.first <= 0.0) throw ConfigError("augment.scale_range must be positive");
  if (a.rot_deg < 0.0) throw ConfigError("augment.rot_deg must be non-negative");
  return a;
}

SemanticMap scale_horizontal(const SemanticMap& map, double factor) {
  if (!(factor > 0.0)) throw ConfigError("squeeze/stretch factor must be positive");
  if (factor == 1.0) return map;
  double sum = 0.0;
  long n = 0;
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      if (map(y, x) != kBackground) {
        sum += x + 0.5;
        ++n;
      }
  if (n == 0) return map;
  const double cx = sum / double(n);
  SemanticMap out(map.height(), map.width());
  for (int x = 0; x < map.width(); ++x) {
    const double src = cx + (x + 0.5 - cx) / factor;
    const int sx = int(std::floor(src));
    if (sx < 0 || sx >= map.width()) continue;
    out.labels.col(x) = map.labels.col(sx);
  }
  return out;
}

std::pair<SemanticMap, SemanticMap> squeeze_stretch(const SemanticMap& parsing_in, const SemanticMap& parsing_gt,
                                                    double factor) {
  return {scale_horizontal(parsing_in, factor), scale_horizontal(parsing_gt, factor)};
}

std::pair<SemanticMap, SemanticMap> squeeze_stretch(const SemanticMap& parsing_in, const SemanticMap& parsing_gt,
                                                    std::pair<double, double> range, Rng& rng, double* factor_out) {
  if (!(range.first > 0.0) || range.second < range.first) throw ConfigError("squeeze/stretch range must be positive");
  const double f = std::uniform_real_distribution<double>(range.first, range.second)(rng);
  if (factor_out) *factor_out = f;
  return squeeze_stretch(parsing_in, parsing_gt, f);
}

std::pair<double, double> Similarity::apply(double x, double y) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = x - cx, dy = y - cy;
  return {cx + scale * (c * dx - s * dy), cy + scale * (s * dx + c * dy)};
}

std::pair<double, double> Similarity::inverse(double x, double y) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = (x - cx) / scale, dy = (y - cy) / scale;
  return {cx + (c * dx + s * dy), cy + (-s * dx + c * dy)};
}

namespace {

template <typename F>
void for_each_source(int height, int width, const Similarity& t, F&& f) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const auto [sx, sy] = t.inverse(x + 0.5, y + 0.5);
      const int ix = int(std::floor(sx)), iy = int(std::floor(sy));
      if (ix >= 0 && iy >= 0 && ix < width && iy < height) f(y, x, iy, ix);
    }
}

}  // namespace

SemanticMap warp(const SemanticMap& map, const Similarity& t) {
  if (t.identity()) return map;
  SemanticMap out(map.height(), map.width());
  for_each_source(map.height(), map.width(), t, [&](int y, int x, int sy, int sx) { out(y, x) = map(sy, sx); });
  return out;
}

Frame warp(const Frame& frame, const Similarity& t) {
  if (t.identity()) return frame;
  Frame out(frame.height(), frame.width());
  for_each_source(frame.height(), frame.width(), t, [&](int y, int x, int sy, int sx) {
    for (int c = 0; c < 3; ++c) out.rgb[c](y, x) = frame.rgb[c](sy, sx);
  });
  return out;
}

std::vector<Keypoint> warp(std::vector<Keypoint> keypoints, const Similarity& t) {
  if (t.identity()) return keypoints;
  for (auto& k : keypoints) {
    const auto [x, y] = t.apply(k.x, k.y);
    k.x = float(x);
    k.y = float(y);
  }
  return keypoints;
}

Similarity random_rot_scale(const AugmentTargets& targets, int height, int width, double rot_deg,
                            std::pair<double, double> scale_range, Rng& rng) {
  if (rot_deg < 0.0 || !(scale_range.first > 0.0) || scale_range.second < scale_range.first)
    throw ConfigError("invalid rotation/scale ranges");
  Similarity t;
  t.cx = 0.5 * width;
  t.cy = 0.5 * height;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double a = unit(rng), s = unit(rng);
  t.angle = rot_deg == 0.0 ? 0.0 : (2.0 * a - 1.0) * rot_deg * std::numbers::pi / 180.0;
  t.scale = scale_range.first + (scale_range.second - scale_range.first) * s;
  for (auto* m : targets.maps) *m = warp(*m, t);
  for (auto* r : targets.renders) *r = warp(*r, t);
  for (auto* k : targets.keypoints) *k = warp(std::move(*k), t);
  return t;
}

float stroke_width(int height, int width) { return 2.f * float(std::max(height, width)) / 128.f; }

namespace {

void stroke(SemanticMap& m, const Keypoint& a, const Keypoint& b, float width, std::uint8_t label) {
  const float r = 0.5f * width;
  const float x0 = std::min(a.x, b.x) - r, x1 = std::max(a.x, b.x) + r;
  const float y0 = std::min(a.y, b.y) - r, y1 = std::max(a.y, b.y) + r;
  const float dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
  for (int y = std::max(0, int(std::floor(y0))); y <= std::min(m.height() - 1, int(y1)); ++y)
    for (int x = std::max(0, int(std::floor(x0))); x <= std::min(m.width() - 1, int(x1)); ++x) {
      const float px = x + 0.5f - a.x, py = y + 0.5f - a.y;
      const float t = len2 > 0.f ? std::clamp((px * dx + py * dy) / len2, 0.f, 1.f) : 0.f;
      const float ex = px - t * dx, ey = py - t * dy;
      if (ex * ex + ey * ey <= r * r) m(y, x) = label;
    }
}

const Keypoint* find_visible(const std::vector<Keypoint>& k, const std::string& name) {
  for (const auto& p : k)
    if (p.name == name && p.visible) return &p;
  return nullptr;
}

void chain(SemanticMap& m, const std::vector<Keypoint>& k, const std::vector<std::string>& names, float width,
           std::uint8_t label) {
  if (names.size() == 1) {
    if (const Keypoint* p = find_visible(k, names[0])) stroke(m, *p, *p, std::max(width, 2.f), label);
    return;
  }
  for (std::size_t i = 0; i + 1 < names.size(); ++i) {
    const Keypoint* a = find_visible(k, names[i]);
    const Keypoint* b = find_visible(k, names[i + 1]);
    if (a && b) stroke(m, *a, *b, width, label);
  }
}

}  // namespace

SemanticMap inject_hand_labels(const SemanticMap& parsing, const std::vector<Keypoint>& keypoints) {
  SemanticMap out = parsing;
  const float w = stroke_width(parsing.height(), parsing.width());
  for (char side : {'l', 'r'})
    for (const auto& [from, to] : hand_chains(side)) {
      const Keypoint* a = find_visible(keypoints, from);
      const Keypoint* b = find_visible(keypoints, to);
      if (a && b) stroke(out, *a, *b, w, side == 'l' ? kLeftHand : kRightHand);
    }
  return out;
}

SemanticMap inject_face_labels(const SemanticMap& parsing, const std::vector<Keypoint>& keypoints) {
  SemanticMap out = parsing;
  const float w = stroke_width(parsing.height(), parsing.width());
  chain(out, keypoints, {"face_brow_l_outer", "face_brow_l_inner"}, w, kEyebrows);
  chain(out, keypoints, {"face_brow_r_inner", "face_brow_r_outer"}, w, kEyebrows);
  chain(out, keypoints, {"face_eye_l"}, w, kEyes);
  chain(out, keypoints, {"face_eye_r"}, w, kEyes);
  chain(out, keypoints, {"face_nose_top", "face_nose_tip"}, w, kNose);
  chain(out, keypoints, {"face_lip_l", "face_lip_top", "face_lip_r", "face_lip_bottom", "face_lip_l"}, w, kLips);
  chain(out, keypoints, {"face_mouth_l", "face_mouth_r"}, w, kInnerMouth);
  return out;
}

Box adjust_face_location(Box box, const std::vector<BoxTransform>& log) {
  for (const auto& t : log) {
    if (!box.valid) break;
    switch (t.kind) {
      case BoxTransform::kResize:
        box.x0 = int(std::floor(box.x0 * t.sx));
        box.y0 = int(std::floor(box.y0 * t.sy));
        box.x1 = int(std::ceil(box.x1 * t.sx));
        box.y1 = int(std::ceil(box.y1 * t.sy));
        break;
      case BoxTransform::kCrop:
        box.x0 = std::clamp(box.x0 - t.x0, 0, t.w);
        box.x1 = std::clamp(box.x1 - t.x0, 0, t.w);
        box.y0 = std::clamp(box.y0 - t.y0, 0, t.h);
        box.y1 = std::clamp(box.y1 - t.y0, 0, t.h);
        break;
      case BoxTransform::kFlip: {
        const int x0 = t.width - box.x1, x1 = t.width - box.x0;
        box.x0 = x0;
        box.x1 = x1;
        break;
      }
    }
    if (box.empty()) box.valid = false;
  }
  return box;
}

}  // namespace reenact
