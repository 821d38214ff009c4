#pragma once

#include "reenact/config.hpp"
#include "reenact/perception.hpp"

#include <filesystem>
#include <map>

namespace reenact {

// IoU of the foreground (label != 0) of two maps. Two empty maps score 1.
double binary_similarity(const SemanticMap& gt, const SemanticMap& gen);
// Mean per-label IoU over the foreground labels present in gt. Labels found
// only in gen are not averaged over but still shrink the IoU of the gt labels
// they overlap. An empty gt scores 1 against an empty gen and 0 otherwise.
double index_similarity(const SemanticMap& gt, const SemanticMap& gen);

// Part-index channel of a dense render as a label map.
SemanticMap dense_index_map(const Frame& dense);

// Luma 0.299 R + 0.587 G + 0.114 B.
PlaneT<double> grayscale(const Frame& f);

// Mean SSIM of the grayscale images: 11x11 Gaussian window, sigma 1.5, over
// the valid window positions only. Higher is better.
double ssim(const Frame& a, const Frame& b);

// LPIPS-style distance: every tap is unit-normalized across channels per
// pixel, then the squared difference is summed over channels and averaged
// over pixels, and the taps are summed.
double perceptual_distance(const Frame& a, const Frame& b, const ToyEmbedder<float>& embedder);

// Frechet distance between Gaussians fitted to two feature sets. eps is added
// to both covariance diagonals before the matrix square root.
double fid(const std::vector<Eigen::VectorXd>& real, const std::vector<Eigen::VectorXd>& gen, double eps = 1e-6);

enum class Direction { kHigherBetter, kLowerBetter };

struct MetricValue {
  std::string name;
  Direction direction = Direction::kHigherBetter;
  double value = 0.0;
  int n_frames = 0;
  bool operator==(const MetricValue&) const = default;
};

struct MetricReport {
  std::vector<MetricValue> metrics;
  std::map<std::string, std::vector<double>> series;  // per-frame values, frame metrics only
  std::map<std::string, std::string> metadata;

  const MetricValue& at(const std::string& name) const;
  bool has(const std::string& name) const;

  std::string to_text() const;
  static MetricReport parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static MetricReport load(const std::filesystem::path& path);
  bool operator==(const MetricReport&) const = default;
};

// ssbs, ssis: parsing maps; dpbs, dpis: dense part indices; ssim;
// lpips_image, lpips_face: the two embedders; fid on image embeddings.
const std::vector<std::string>& all_metrics();
// "metrics.enabled" as a comma-separated subset of all_metrics().
std::vector<std::string> enabled_metrics(const Config& c);

// Every generated frame is paired with the ground-truth frame of the same
// person and frame index; ground-truth frames without a counterpart are unused.
MetricReport evaluate(const Dataset& gen, const Dataset& gt, const Providers& providers, const Config& config = {});
MetricReport evaluate(const std::filesystem::path& gen_dir, const std::filesystem::path& gt_dir,
                      const Providers& providers, const Config& config = {},
                      const std::filesystem::path& report_path = {});

}  // namespace reenact
