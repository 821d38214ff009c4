#pragma once

#include "reenact/config.hpp"
#include "reenact/nn/layers.hpp"
#include "reenact/synthdata.hpp"

#include <atomic>
#include <memory>

namespace reenact {

struct UnsupportedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoFaceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EmbedderKind { kFace, kImage };

// One tapped convolution stage: conv(kernel, stride) followed by ReLU.
struct TapSpec {
  std::string name;
  int channels = 8;
  int kernel = 3;
  int stride = 1;
};

struct EmbedderSpec {
  std::vector<TapSpec> layers;
  int dims = 32;
  float weight_norm = 8.f;  // Frobenius-norm cap applied to every weight tensor

  // Three taps at cumulative strides 1, 4 and 16.
  static EmbedderSpec standard(int dims);
};

template <typename S>
struct EmbedderOutput {
  std::vector<nn::Var<S>> taps;
  nn::Var<S> embedding;  // [N, dims, 1, 1]
};

// Small fixed-seed convolutional encoder standing in for the pretrained face
// and image classifiers. Its weights are constants: gradients flow through it
// to the input but never into it.
template <typename S>
class ToyEmbedder {
 public:
  ToyEmbedder(EmbedderKind kind, EmbedderSpec spec, std::uint64_t seed);

  EmbedderOutput<S> operator()(const nn::Var<S>& images) const;
  Eigen::VectorXf embed(const Frame& image) const;

  EmbedderKind kind() const { return kind_; }
  int dims() const { return spec_.dims; }
  const EmbedderSpec& spec() const { return spec_; }
  std::vector<std::string> tap_names() const;
  // Lipschitz constant of the embedding w.r.t. the input in the L2 norm.
  double lipschitz_bound() const { return lipschitz_; }
  // Cumulative stride of each tap.
  std::vector<int> tap_strides() const;

  template <typename T>
  ToyEmbedder<T> cast() const;

 private:
  template <typename T>
  friend class ToyEmbedder;
  ToyEmbedder() = default;

  EmbedderKind kind_ = EmbedderKind::kImage;
  EmbedderSpec spec_;
  std::vector<nn::Var<S>> weights_, biases_;
  nn::Var<S> proj_w_, proj_b_;
  double lipschitz_ = 0.0;
};

struct CallCounts {
  long hp = 0, dp = 0, op = 0, face_embed = 0, image_embed = 0, inpaint = 0, face_align = 0;
};

struct ProviderConfig {
  int face_dim = 128;
  int image_dim = 32;
  std::uint64_t face_seed = 101;
  std::uint64_t image_seed = 202;

  static ProviderConfig from(const Config& c);
};

// The perception providers. Oracle implementations read the ground truth that
// synthdata attaches to each record; a wrapper around real networks would
// read only record.frame.
class Providers {
 public:
  explicit Providers(ProviderConfig config = {});
  Providers(const Providers&) = delete;
  Providers& operator=(const Providers&) = delete;

  SemanticMap hp(const SampleRecord& r) const;
  Frame dp(const SampleRecord& r) const;
  // Keypoints and stick render; dense_render is left empty.
  PoseBundle op(const SampleRecord& r) const;
  // Pixels under the mask come from the figure-free render of the scene.
  Frame inpaint(const SampleRecord& r, const BlendMask& mask) const;
  Eigen::VectorXf face_embed(const Frame& image) const;
  Eigen::VectorXf image_embed(const Frame& image) const;
  Box face_align(const PoseBundle& pose, int height, int width) const;

  const ToyEmbedder<float>& face_embedder() const { return face_; }
  const ToyEmbedder<float>& image_embedder() const { return image_; }
  const ProviderConfig& config() const { return config_; }

  CallCounts counts() const;
  void reset_counts();

 private:
  ProviderConfig config_;
  ToyEmbedder<float> face_;
  ToyEmbedder<float> image_;
  mutable std::atomic<long> hp_{0}, dp_{0}, op_{0}, face_embed_{0}, image_embed_{0}, inpaint_{0}, align_{0};
};

// Square box around the visible face landmarks ("face_" keypoints), grown by
// margin * side on every edge and shifted to lie inside the frame.
Box face_box(const std::vector<Keypoint>& landmarks, int height, int width, float margin = 0.6f);

inline constexpr int kFaceCropSize = 224;

}  // namespace reenact
