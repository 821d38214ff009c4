#pragma once

#include "reenact/config.hpp"
#include "reenact/gan.hpp"
#include "reenact/perception.hpp"
#include "reenact/synthdata.hpp"
#include "reenact/training.hpp"

#include <functional>
#include <memory>

namespace reenact {

struct FRConfig {
  int crop = 64;  // side of the square face crops the network sees
  int nf = 16;
  int ndf = 16;
  double lambda_facep = 1.0, lambda_rec = 1.0, lambda_mask_reg = 0.1, lambda_adv = 0.1;
  nn::AdamConfig adam{1e-4, 0.5, 0.999, 1e-8};
  int batch = 8;
  int window = 250;
  std::pair<double, double> blur_sigma{0.5, 2.0};
  double noise_sigma = 0.05;

  static FRConfig from(const Config& c);
  Config to_config() const;
};

// Bilinear resample of the box region to size x size.
Frame crop_face(const Frame& frame, const Box& box, int size);

// Gaussian blur with sigma drawn from cfg.blur_sigma plus N(0, noise_sigma) noise, clamped to [0,1].
Frame degrade(const Frame& crop, const FRConfig& cfg, Rng& rng);
Frame gaussian_blur(const Frame& f, double sigma);

template <typename S>
class FRNetwork : public nn::Module<S> {
 public:
  FRNetwork(const FRConfig& cfg, int embed_dim, nn::Rng& rng);

  struct Result {
    nn::Var<S> crop;  // [N, 3, C, C]
    nn::Var<S> mask;  // [N, 1, C, C]
  };
  // c0: degraded crops; identity: face embeddings of c_I as [N, D, 1, 1].
  Result operator()(const nn::Var<S>& c0, const nn::Var<S>& identity) const;

 private:
  FRConfig cfg_;
  int embed_dim_;
  nn::Conv2d<S> e1_, e2_, e3_, fuse_, m2_, m1_, crop_head_, mask_head_;
  nn::Linear<S> id_;
  nn::ConvTranspose2d<S> u2_, u1_;
};

// Face-embedder perceptual loss: sum over taps from first_tap on of the mean
// absolute activation difference between c_I and c.
template <typename S>
nn::Var<S> loss_facep(const nn::Var<S>& c_identity, const nn::Var<S>& c, const ToyEmbedder<S>& face_embedder,
                      int first_tap = 0);

// Inside the box: c*m + frame*(1-m), with c and m resampled to the box size
// (bilinear for c, nearest for m). Outside the box the frame is untouched.
Frame blend_back(const Frame& frame, const Box& box, const Frame& c, const BlendMask& m);

struct FRSample {
  Frame c0;        // degraded (or rendered) face crop
  Frame target;    // clean face crop
  Frame identity;  // c_I, the face crop of another frame of the person
};

// Identity crop from a, target crop from b. Without a rendered frame the
// input crop is a synthetic degradation of the target.
FRSample make_fr_sample(const SampleRecord& a, const SampleRecord& b, const FRConfig& cfg, Rng& rng,
                        const Frame* rendered_b = nullptr);
// With a renderer, input crops come from render(a, b), a frame of b drawn with
// the identity of a, instead of a degraded ground truth.
using FrameRenderer = std::function<Frame(const SampleRecord& a, const SampleRecord& b)>;
std::vector<FRSample> make_fr_batch(const Dataset& ds, const FRConfig& cfg, Rng& rng,
                                    const FrameRenderer& render = {});

struct FROutput {
  Frame c;
  BlendMask m;
};

class FRModel {
 public:
  FRModel(FRConfig cfg, const Providers& providers, std::uint64_t seed);

  FROutput forward(const Frame& c0, const Eigen::VectorXf& identity_embedding);
  FROutput forward(const Frame& c0, const Frame& c_identity) {
    return forward(c0, providers_.face_embed(c_identity));
  }
  LossReport train_step(const std::vector<FRSample>& batch);

  FRNetwork<float>& network() { return *net_; }
  PatchDiscriminator<float>& discriminator() { return *disc_; }
  const FRConfig& config() const { return cfg_; }
  const Providers& providers() const { return providers_; }

 private:
  FRConfig cfg_;
  const Providers& providers_;
  nn::Rng rng_;
  std::unique_ptr<FRNetwork<float>> net_;
  std::unique_ptr<PatchDiscriminator<float>> disc_;
  std::unique_ptr<nn::Adam<float>> opt_g_, opt_d_;
};

}  // namespace reenact
