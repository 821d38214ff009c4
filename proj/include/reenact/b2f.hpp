#pragma once

#include "reenact/config.hpp"
#include "reenact/gan.hpp"
#include "reenact/perception.hpp"
#include "reenact/synthdata.hpp"
#include "reenact/training.hpp"

#include <map>
#include <memory>

namespace reenact {

inline constexpr int kPartCount = 5;

// Crops t_1..t_5: face+hair, upper clothing, lower clothing, shoes+socks and a
// constant skin-tone image.
struct IdentityCrops {
  std::array<Frame, kPartCount> crops;
  std::array<bool, kPartCount> empty{};
};

// Label groups behind crops 1-4 and the skin labels behind crop 5.
const std::array<std::vector<std::uint8_t>, kPartCount>& part_groups();

IdentityCrops part_extract(const Frame& image, const SemanticMap& p_star, int size = kFaceCropSize);

// [face_embed(t_1), image_embed(t_2), ..., image_embed(t_5)].
Eigen::VectorXf embed_identity(const IdentityCrops& crops, const Providers& providers);
inline int identity_dim(const ProviderConfig& p) { return p.face_dim + 4 * p.image_dim; }

struct PersonIdentity {
  IdentityCrops crops;
  Eigen::VectorXf e_z;
};

PersonIdentity make_identity(const Frame& image, const SemanticMap& p_star, const Providers& providers);

struct B2FConfig {
  int height = 128, width = 80;
  int ngf = 8;  // channels of the last decoder stage, doubled per stage toward the base
  int max_channels = 64;
  int spade_hidden = 16;
  int ndf = 16;
  double lambda_hinge = 1.0, lambda_fm = 1.0, lambda_perceptual = 1.0, lambda_face = 1.0, lambda_mask = 5.0;
  nn::AdamConfig adam;
  int batch = 4;
  int window = 250;

  // Decoder runs on a square canvas of side 4 * 2^stages and is center-cropped.
  int stages() const;
  int canvas() const { return 4 << stages(); }

  static B2FConfig from(const Config& c);
  Config to_config() const;
};

// Spatially-adaptive normalization: parameter-free instance norm modulated by
// per-pixel scale and shift predicted from the label map.
template <typename S>
class Spade : public nn::Module<S> {
 public:
  Spade(int channels, int labels, int hidden, nn::Rng& rng);
  nn::Var<S> operator()(const nn::Var<S>& x, const nn::Var<S>& seg) const;

 private:
  nn::InstanceNorm2d<S> norm_;
  nn::Conv2d<S> shared_, gamma_, beta_;
};

template <typename S>
struct B2FResult {
  nn::Var<S> image;  // [N, 3, H, W] in [0, 1]
  nn::Var<S> mask;   // [N, 1, H, W] in [0, 1]
};

template <typename S>
class B2FGenerator : public nn::Module<S> {
 public:
  B2FGenerator(const B2FConfig& cfg, int identity_dim, nn::Rng& rng);

  // Identity projection to the 4x4 base tensor.
  nn::Var<S> project(const nn::Var<S>& e_z) const;
  // cond: [N, 27, canvas, canvas] one-hot from b2f_condition.
  B2FResult<S> decode(const nn::Var<S>& cond, const nn::Var<S>& base) const;
  B2FResult<S> operator()(const nn::Var<S>& cond, const nn::Var<S>& e_z) const { return decode(cond, project(e_z)); }

  int identity_dim() const { return identity_dim_; }

 private:
  B2FConfig cfg_;
  int identity_dim_;
  int base_channels_;
  std::unique_ptr<nn::Linear<S>> fc_;
  std::vector<std::unique_ptr<nn::Conv2d<S>>> convs_;
  std::vector<std::unique_ptr<Spade<S>>> spades_;
  std::unique_ptr<nn::Conv2d<S>> image_head_, mask_head_;
};

// 27-label one-hot on the decoder canvas; columns outside the frame are background.
template <typename S>
nn::Tensor<S> b2f_condition(const std::vector<const SemanticMap*>& maps, const B2FConfig& cfg);

template <typename S>
nn::Var<S> loss_fm_b2f(const std::vector<std::vector<nn::Var<S>>>& real_acts,
                       const std::vector<std::vector<nn::Var<S>>>& fake_acts) {
  return loss_fm(real_acts, fake_acts);
}
// Sum over the embedder's taps of the mean absolute difference.
template <typename S>
nn::Var<S> loss_perceptual(const nn::Var<S>& x, const nn::Var<S>& o, const ToyEmbedder<S>& embedder);
// Face-embedder perceptual loss on the face crops. Samples with an invalid box
// are skipped; if none is valid the loss is 0 and *flagged is set.
template <typename S>
nn::Var<S> loss_face_emphasis(const nn::Var<S>& frame, const nn::Var<S>& gt_frame, const std::vector<Box>& boxes,
                              const ToyEmbedder<S>& embedder, bool* flagged = nullptr,
                              int crop_size = kFaceCropSize);
template <typename S>
nn::Var<S> loss_mask(const nn::Var<S>& m, const std::vector<const SemanticMap*>& parsing_gt, double lambda = 5.0);

struct B2FSample {
  SemanticMap cond;  // target parsing with hand and face labels
  Eigen::VectorXf e_z;
  Frame gt_frame;
  SemanticMap gt_parsing;
  Frame background;
  Box face;  // valid == false when no face is visible
};

// Identity embeddings keyed by (person, frame); each record is embedded once.
class IdentityCache {
 public:
  explicit IdentityCache(const Providers& providers) : providers_(providers) {}
  const Eigen::VectorXf& get(const SampleRecord& r);
  std::size_t size() const { return cache_.size(); }

 private:
  const Providers& providers_;
  std::map<std::pair<std::string, int>, Eigen::VectorXf> cache_;
};

// Identity from record a, everything else from record b.
B2FSample make_b2f_sample(const SampleRecord& a, const SampleRecord& b, IdentityCache& identities);
std::vector<B2FSample> make_b2f_batch(const Dataset& ds, const B2FConfig& cfg, IdentityCache& identities, Rng& rng);

struct B2FOutput {
  Frame z;
  BlendMask m;
};

class B2FModel {
 public:
  B2FModel(B2FConfig cfg, const Providers& providers, std::uint64_t seed);

  nn::Tensor<float> project(const Eigen::VectorXf& e_z);
  B2FOutput decode(const SemanticMap& cond, const nn::Tensor<float>& base);
  B2FOutput forward(const SemanticMap& cond, const Eigen::VectorXf& e_z) { return decode(cond, project(e_z)); }
  LossReport train_step(const std::vector<B2FSample>& batch);

  B2FGenerator<float>& generator() { return *gen_; }
  MultiScaleDiscriminator<float>& discriminator() { return *disc_; }
  const B2FConfig& config() const { return cfg_; }
  const Providers& providers() const { return providers_; }

 private:
  B2FConfig cfg_;
  const Providers& providers_;
  nn::Rng rng_;
  std::unique_ptr<B2FGenerator<float>> gen_;
  std::unique_ptr<MultiScaleDiscriminator<float>> disc_;
  std::unique_ptr<nn::Adam<float>> opt_g_, opt_d_;
};

}  // namespace reenact
