#pragma once

// Conversions between image-domain types and NCHW tensors.

#include "reenact/core.hpp"
#include "reenact/nn/tensor.hpp"

namespace reenact::nn {

template <typename S>
Tensor<S> frames_to_tensor(const std::vector<const Frame*>& frames) {
  if (frames.empty()) throw ShapeError("no frames to batch");
  const int h = frames[0]->height(), w = frames[0]->width();
  Tensor<S> t(Shape{int(frames.size()), 3, h, w});
  for (std::size_t n = 0; n < frames.size(); ++n) {
    if (!frames[n]->same_dims(h, w)) throw ShapeError("frame batch with mixed sizes");
    for (int c = 0; c < 3; ++c) t.plane(int(n), c) = frames[n]->rgb[c].template cast<S>();
  }
  return t;
}

template <typename S>
Tensor<S> frame_to_tensor(const Frame& f) {
  return frames_to_tensor<S>({&f});
}

template <typename S>
Frame tensor_to_frame(const Tensor<S>& t, int n = 0) {
  if (t.shape.c != 3) throw ShapeError("frame tensor needs 3 channels, got " + t.shape.str());
  Frame f(t.shape.h, t.shape.w);
  for (int c = 0; c < 3; ++c) f.rgb[c] = t.plane(n, c).template cast<float>();
  f.clamp();
  return f;
}

template <typename S>
void write_one_hot(const SemanticMap& map, int n_labels, Tensor<S>& t, int n) {
  for (int c = 0; c < n_labels; ++c) t.plane(n, c).setZero();
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) {
      const int l = map(y, x);
      if (l >= n_labels) throw InvalidLabelError("label " + std::to_string(l) + " outside " + std::to_string(n_labels));
      t.at(n, l, y, x) = S(1);
    }
}

template <typename S>
Tensor<S> maps_to_one_hot(const std::vector<const SemanticMap*>& maps, int n_labels) {
  if (maps.empty()) throw ShapeError("no maps to batch");
  const int h = maps[0]->height(), w = maps[0]->width();
  Tensor<S> t(Shape{int(maps.size()), n_labels, h, w});
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (maps[n]->height() != h || maps[n]->width() != w) throw ShapeError("map batch with mixed sizes");
    write_one_hot(*maps[n], n_labels, t, int(n));
  }
  return t;
}

template <typename S>
Tensor<S> masks_to_tensor(const std::vector<const BlendMask*>& masks) {
  if (masks.empty()) throw ShapeError("no masks to batch");
  const int h = masks[0]->height(), w = masks[0]->width();
  Tensor<S> t(Shape{int(masks.size()), 1, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n]->height() != h || masks[n]->width() != w) throw ShapeError("mask batch with mixed sizes");
    t.plane(int(n), 0) = masks[n]->alpha.template cast<S>();
  }
  return t;
}

template <typename S>
BlendMask tensor_to_mask(const Tensor<S>& t, int n = 0) {
  BlendMask m(t.plane(n, 0).template cast<float>());
  m.alpha = m.alpha.max(0.f).min(1.f);
  return m;
}

// Per-pixel argmax over channels, ties toward the lower channel.
template <typename S>
SemanticMap tensor_argmax(const Tensor<S>& t, int n = 0) {
  SemanticMap m(t.shape.h, t.shape.w);
  for (int y = 0; y < t.shape.h; ++y)
    for (int x = 0; x < t.shape.w; ++x) {
      int best = 0;
      S v = t.at(n, 0, y, x);
      for (int c = 1; c < t.shape.c; ++c)
        if (t.at(n, c, y, x) > v) {
          v = t.at(n, c, y, x);
          best = c;
        }
      m(y, x) = std::uint8_t(best);
    }
  return m;
}

}  // namespace reenact::nn
