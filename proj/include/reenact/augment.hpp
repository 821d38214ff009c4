#pragma once

#include "reenact/config.hpp"
#include "reenact/synthdata.hpp"

namespace reenact {

struct AugmentConfig {
  std::pair<double, double> squeeze_range{0.7, 1.3};
  double rot_deg = 10.0;
  std::pair<double, double> scale_range{0.9, 1.1};

  static AugmentConfig from(const Config& c);
};

// Horizontal scaling of each map about its own figure centroid (column mean of
// foreground pixels), nearest-neighbour resampled.
SemanticMap scale_horizontal(const SemanticMap& map, double factor);
std::pair<SemanticMap, SemanticMap> squeeze_stretch(const SemanticMap& parsing_in, const SemanticMap& parsing_gt,
                                                    double factor);
// Samples one factor uniformly from range; returns it through factor_out.
std::pair<SemanticMap, SemanticMap> squeeze_stretch(const SemanticMap& parsing_in, const SemanticMap& parsing_gt,
                                                    std::pair<double, double> range, Rng& rng,
                                                    double* factor_out = nullptr);

// Rotation by angle (radians) and isotropic scale about (cx, cy).
struct Similarity {
  double angle = 0.0;
  double scale = 1.0;
  double cx = 0.0, cy = 0.0;

  // Forward map of a point in pixel-center coordinates.
  std::pair<double, double> apply(double x, double y) const;
  std::pair<double, double> inverse(double x, double y) const;
  bool identity() const { return angle == 0.0 && scale == 1.0; }
};

SemanticMap warp(const SemanticMap& map, const Similarity& t);
// Nearest-neighbour so that label-like channels (stick colors, part index) stay exact.
Frame warp(const Frame& frame, const Similarity& t);
std::vector<Keypoint> warp(std::vector<Keypoint> keypoints, const Similarity& t);

struct AugmentTargets {
  std::vector<SemanticMap*> maps;
  std::vector<Frame*> renders;
  std::vector<std::vector<Keypoint>*> keypoints;
};

// Draws one rotation/scale about the image center and applies it to every target.
Similarity random_rot_scale(const AugmentTargets& targets, int height, int width, double rot_deg,
                            std::pair<double, double> scale_range, Rng& rng);

// Stroke width in pixels: 2 px at 128 px image extent, proportional otherwise.
float stroke_width(int height, int width);

SemanticMap inject_hand_labels(const SemanticMap& parsing, const std::vector<Keypoint>& keypoints);
// Adds the five face labels (22..26) for the conditioning map.
SemanticMap inject_face_labels(const SemanticMap& parsing, const std::vector<Keypoint>& keypoints);

struct BoxTransform {
  enum Kind { kResize, kCrop, kFlip } kind = kResize;
  double sx = 1.0, sy = 1.0;     // resize factors
  int x0 = 0, y0 = 0, w = 0, h = 0;  // crop window
  int width = 0;                 // image width before a horizontal flip

  static BoxTransform resize(double sx, double sy) { return {kResize, sx, sy}; }
  static BoxTransform crop(int x0, int y0, int w, int h) { return {kCrop, 1.0, 1.0, x0, y0, w, h}; }
  static BoxTransform flip(int width) { return {kFlip, 1.0, 1.0, 0, 0, 0, 0, width}; }
};

// Maps the box through the same sequence; an empty result is marked invalid.
Box adjust_face_location(Box box, const std::vector<BoxTransform>& log);

}  // namespace reenact
