#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reenact {

template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<float>;
using LabelPlane = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidLabelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Body parsing labels. Ids 0..19 are the garment/body-part labels, 20 and 21
// are the hand-landmark labels. Face labels 22..26 only ever appear in the
// conditioning maps fed to the frame renderer.
enum Label : std::uint8_t {
  kBackground = 0,
  kHair,
  kFace,
  kTorsoSkin,
  kUpperClothes,
  kCoat,
  kDress,
  kPants,
  kSkirt,
  kLeftArm,
  kRightArm,
  kLeftLeg,
  kRightLeg,
  kLeftShoe,
  kRightShoe,
  kSocks,
  kHat,
  kGlove,
  kScarf,
  kSunglasses,
  kLeftHand,
  kRightHand,
  kEyebrows,
  kEyes,
  kNose,
  kLips,
  kInnerMouth,
};

inline constexpr int kBodyLabelCount = 22;
inline constexpr int kFaceLabelCount = 5;
inline constexpr int kConditionLabelCount = kBodyLabelCount + kFaceLabelCount;
inline constexpr int kMaxDensePart = 24;

struct LabelSpace {
  std::vector<std::string> body_labels;
  std::vector<std::string> face_labels;

  static const LabelSpace& standard();

  int body_count() const { return static_cast<int>(body_labels.size()); }
  int total_count() const { return body_count() + static_cast<int>(face_labels.size()); }
  std::string_view name(int id) const;
  bool operator==(const LabelSpace&) const = default;
};

struct SemanticMap {
  LabelPlane labels;

  SemanticMap() = default;
  SemanticMap(int height, int width, std::uint8_t fill = kBackground)
      : labels(LabelPlane::Constant(height, width, fill)) {}
  explicit SemanticMap(LabelPlane l) : labels(std::move(l)) {}

  int height() const { return static_cast<int>(labels.rows()); }
  int width() const { return static_cast<int>(labels.cols()); }
  std::uint8_t operator()(int y, int x) const { return labels(y, x); }
  std::uint8_t& operator()(int y, int x) { return labels(y, x); }
  bool operator==(const SemanticMap& o) const {
    return labels.rows() == o.labels.rows() && labels.cols() == o.labels.cols() &&
           (labels == o.labels).all();
  }
};

struct Frame {
  std::array<Plane, 3> rgb;

  Frame() = default;
  Frame(int height, int width, float fill = 0.f) {
    for (auto& p : rgb) p = Plane::Constant(height, width, fill);
  }

  int height() const { return static_cast<int>(rgb[0].rows()); }
  int width() const { return static_cast<int>(rgb[0].cols()); }
  bool same_dims(int h, int w) const { return height() == h && width() == w; }
  void clamp();
  bool operator==(const Frame& o) const {
    if (!same_dims(o.height(), o.width())) return false;
    for (int c = 0; c < 3; ++c)
      if (!(rgb[c] == o.rgb[c]).all()) return false;
    return true;
  }
};

struct BlendMask {
  Plane alpha;

  BlendMask() = default;
  BlendMask(int height, int width, float fill = 0.f) : alpha(Plane::Constant(height, width, fill)) {}
  explicit BlendMask(Plane a) : alpha(std::move(a)) {}

  int height() const { return static_cast<int>(alpha.rows()); }
  int width() const { return static_cast<int>(alpha.cols()); }
};

struct Keypoint {
  std::string name;
  float x = 0.f;
  float y = 0.f;
  bool visible = true;
  bool operator==(const Keypoint&) const = default;
};

struct PoseBundle {
  std::vector<Keypoint> keypoints;
  Frame stick_render;
  // Channels: U in [0,1], V in [0,1], part index I in {0..24} stored as a float.
  Frame dense_render;

  const Keypoint* find(std::string_view name) const;
  bool operator==(const PoseBundle&) const = default;
};

// Axis-aligned box in pixel coordinates, [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool valid = true;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(float x, float y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const Box&) const = default;
};

// channel c of the result is 1 exactly where map == c.
std::vector<Plane> one_hot(const SemanticMap& map, int n_labels);

// Per-pixel index of the largest channel, ties resolved toward the lower id.
SemanticMap argmax(const std::vector<Plane>& channels);

BlendMask binarize(const SemanticMap& map);

template <typename DerivedZ, typename DerivedM, typename DerivedB>
auto blend(const Eigen::ArrayBase<DerivedZ>& z, const Eigen::ArrayBase<DerivedM>& m,
           const Eigen::ArrayBase<DerivedB>& b) {
  using Scalar = typename DerivedZ::Scalar;
  return z * m + b * (Scalar(1) - m);
}

// f = z*m + b*(1-m), per pixel and channel.
Frame blend(const Frame& z, const BlendMask& m, const Frame& b);

std::vector<int> label_histogram(const SemanticMap& map, int n_labels);

}  // namespace reenact
