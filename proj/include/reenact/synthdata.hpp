#pragma once

#include "reenact/core.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace reenact {

using Rng = std::mt19937_64;

struct PlacementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExhaustionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Color {
  float r = 0.f, g = 0.f, b = 0.f;
  bool operator==(const Color&) const = default;
};

enum class Outfit { kShirtPants, kDress, kShirtSkirt, kCoatPants };

// Lengths and widths are fractions of the image height.
struct BodyParams {
  float head_radius = 0.055f;
  float neck_length = 0.03f;
  float torso_length = 0.24f;
  float torso_width = 0.15f;
  float upper_arm_length = 0.11f;
  float lower_arm_length = 0.10f;
  float arm_width = 0.036f;
  float upper_leg_length = 0.18f;
  float lower_leg_length = 0.16f;
  float leg_width = 0.05f;
  float hand_size = 0.03f;

  Outfit outfit = Outfit::kShirtPants;
  bool sleeves = false;
  bool long_hair = false;
  bool hat = false;
  bool gloves = false;

  Color skin{0.85f, 0.65f, 0.5f};
  Color hair{0.25f, 0.15f, 0.08f};
  Color upper{0.2f, 0.35f, 0.75f};
  Color lower{0.15f, 0.15f, 0.2f};
  Color shoes{0.1f, 0.1f, 0.1f};
  Color accessory{0.8f, 0.2f, 0.2f};

  void validate() const;
  static BodyParams random(Rng& rng);
};

// Articulation angles in radians. Limb angles are measured from straight
// down; the elbow and knee angles are relative bends.
struct PoseParams {
  static constexpr int kAngleCount = 10;
  float torso_lean = 0.f;
  float head_tilt = 0.f;
  float l_shoulder = 0.35f, r_shoulder = -0.35f;
  float l_elbow = 0.f, r_elbow = 0.f;
  float l_hip = 0.08f, r_hip = -0.08f;
  float l_knee = 0.f, r_knee = 0.f;
  float tx = 0.f, ty = 0.f;  // fractions of the image height
  float scale = 1.f;

  static PoseParams canonical() { return {}; }
  std::array<float, kAngleCount> angles() const;
  void set_angles(const std::array<float, kAngleCount>& a);
  // Clamps every angle into its joint limit.
  void clamp_to_limits();
  bool within_limits() const;
  static const std::array<std::pair<float, float>, kAngleCount>& limits();
};

struct SampleRecord {
  Frame frame;
  SemanticMap parsing;
  PoseBundle pose;
  Frame background;  // figure-free render of the same scene
  std::string person_id;
  int frame_index = 0;
  bool operator==(const SampleRecord&) const = default;
};

struct RenderSize {
  int height = 128;
  int width = 80;
};

SampleRecord render_person(const BodyParams& body, const PoseParams& pose, RenderSize size,
                           std::uint64_t scene_seed = 0, const std::string& person_id = "p000",
                           int frame_index = 0);

// Stick figure with fixed per-limb colors, face landmark dots and hand chains.
Frame render_stick_figure(const std::vector<Keypoint>& keypoints, int height, int width);

// Limb segments of the stick figure, by keypoint name.
const std::vector<std::pair<std::string, std::string>>& skeleton_edges();
const std::vector<std::string>& face_landmark_names();
// Hand keypoint chains for "l" or "r" as (from, to) pairs.
std::vector<std::pair<std::string, std::string>> hand_chains(char side);

struct SequenceOptions {
  float max_angle_delta = 0.12f;  // per-frame bound on every joint angle change
  float max_drift = 0.004f;       // per-frame bound on translation change
};

std::vector<SampleRecord> sample_sequence(const BodyParams& body, int length, std::uint64_t seed,
                                          RenderSize size = {}, const std::string& person_id = "p000",
                                          SequenceOptions options = {},
                                          std::vector<PoseParams>* poses_out = nullptr);

struct Dataset {
  RenderSize size;
  std::vector<SampleRecord> records;

  std::vector<std::string> persons() const;
  std::vector<const SampleRecord*> frames_of(const std::string& person) const;
};

Dataset generate_dataset(int persons, int frames, RenderSize size, std::uint64_t seed);

// Two records of one person at most `window` frames apart. The first supplies
// the target parsing, the second the ground truth.
std::pair<const SampleRecord*, const SampleRecord*> sample_training_pair(const Dataset& dataset, int window,
                                                                         Rng& rng);

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Record file locations inside a dataset directory.
std::filesystem::path record_stem(const std::filesystem::path& dir, const std::string& person, int frame_index);
SampleRecord load_record(const std::filesystem::path& dir, const std::string& person, int frame_index);

}  // namespace reenact
