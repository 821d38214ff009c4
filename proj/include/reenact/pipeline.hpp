#pragma once

#include "reenact/b2f.hpp"
#include "reenact/checkpoint.hpp"
#include "reenact/fr.hpp"
#include "reenact/p2b.hpp"

#include <optional>

namespace reenact {

// Checkpoints of the three trained networks. Provider settings are kept in the
// config snapshot so that loading can verify the embedding dims.
Checkpoint to_checkpoint(P2BModel& m);
Checkpoint to_checkpoint(B2FModel& m);
Checkpoint to_checkpoint(FRModel& m);
std::unique_ptr<P2BModel> load_p2b(const Checkpoint& c);
std::unique_ptr<B2FModel> load_b2f(const Checkpoint& c, const Providers& providers);
std::unique_ptr<FRModel> load_fr(const Checkpoint& c, const Providers& providers);
// Hex CRC-32 of a checkpoint file, used to tag outputs.
std::string checkpoint_id(const std::filesystem::path& path);

enum class BackgroundSource { kStatic, kDirectory, kInpaintDriving, kInpaintTarget };

struct PipelineConfig {
  int height = 128, width = 80;
  ProviderConfig providers;
  std::filesystem::path p2b_checkpoint, b2f_checkpoint, fr_checkpoint;  // fr is optional
  BackgroundSource background = BackgroundSource::kInpaintDriving;
  std::filesystem::path background_path;  // static frame or frame directory
  int dilation = 3;                       // figure mask dilation for inpainting, pixels
  bool zero_masks = false;                // diagnostic: every blend mask forced to 0
  std::uint64_t seed = 0;

  static PipelineConfig from(const Config& c);
  // Throws ConfigError for missing checkpoint or background files.
  void validate() const;
};

// Label map of the figure, grown by `radius` pixels (Euclidean disk).
BlendMask figure_mask(const SemanticMap& p_star, int radius);
// Background of the target image: the dilated figure region is regenerated by
// the inpainting provider, every other pixel is kept.
Frame extract_target_background(const SampleRecord& target, const SemanticMap& p_star, const Providers& providers,
                                int radius);

struct FrameResult {
  Frame frame;        // f_i
  Frame coarse;       // f^0_i, before face refinement
  Frame z;            // B2F rendering
  BlendMask mask;     // m_i
  SemanticMap map;    // P2B output
  PoseBundle pose;    // driving OP keypoints and stick figure with the DP render
  Box face;           // valid == false when refinement was skipped
};

// Per-person constants of a run: computed once by set_target and reused for
// every driving frame.
struct TargetConstants {
  SemanticMap p_star;
  PersonIdentity identity;
  nn::Tensor<float> base;  // B2F identity projection
  std::optional<Eigen::VectorXf> face_identity;  // FR conditioning, absent without a visible face
};

class Reenactor {
 public:
  // fr may be null, in which case frames are not face-refined.
  Reenactor(P2BModel& p2b, B2FModel& b2f, FRModel* fr, const Providers& providers, bool zero_masks = false);

  void set_target(const SampleRecord& target);
  const TargetConstants& target() const;
  // Output for frame i depends only on the target constants, the driving
  // record and the background frame.
  FrameResult frame(const SampleRecord& driving, const Frame& background) const;
  std::vector<FrameResult> run(const std::vector<SampleRecord>& driving, const std::vector<Frame>& backgrounds) const;

  long projections() const { return projections_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  P2BModel& p2b_;
  B2FModel& b2f_;
  FRModel* fr_;
  const Providers& providers_;
  bool zero_masks_;
  std::optional<TargetConstants> target_;
  long projections_ = 0;
  std::vector<std::string> warnings_;
};

// Backgrounds for a run: one per driving frame. A static frame is repeated; a
// directory must hold exactly one frame per driving frame, paired by order.
// The target background needs set_target to have run.
std::vector<Frame> load_backgrounds(const PipelineConfig& cfg, const std::vector<SampleRecord>& driving,
                                    const SampleRecord& target, const Reenactor& r, const Providers& providers);

// Dataset records of a run, so that the output can be evaluated like any
// synthetic set: parsing is the P2B map and dense the driving DP, both gated
// by m >= 0.5.
Dataset as_dataset(const std::vector<FrameResult>& results, const std::vector<SampleRecord>& driving,
                   const std::vector<Frame>& backgrounds);

// Masks, maps and intermediate frames as PNGs under dir.
void write_debug(const std::vector<FrameResult>& results, const std::filesystem::path& dir);

}  // namespace reenact
