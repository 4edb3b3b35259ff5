#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specmatch/coupling.hpp"
#include "specmatch/matching.hpp"
#include "specmatch/pointcloud.hpp"
#include "specmatch/registration.hpp"

namespace specmatch {

/// Row-major per-pixel scores; pixels without a point carry 0.
struct ScoreMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  double kept_fraction = 1.0;  // subsampling fraction the map was built with

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

struct GroundTruth {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> mask;                // 1 = anomalous
  std::vector<std::vector<std::size_t>> regions;  // 8-connected components, pixel indices ascending
  bool defect_free() const { return regions.empty(); }
};

/// Labels the 8-connected components of a binary mask.
GroundTruth ground_truth_from_mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> mask);

/// Side of the square dilation element for a subsampling fraction.
std::size_t dilation_size(double kept_fraction);

/// Grayscale dilation (max filter) with a square element of side `size`.
/// The element spans offsets [-size/2, size - 1 - size/2] around a pixel.
std::vector<double> dilate(const std::vector<double>& image, std::size_t height, std::size_t width, std::size_t size);

/// Writes each score at its point's grid cell, then dilates by
/// dilation_size(kept_fraction).
ScoreMap back_project(std::span<const PointScore> scores, const PointCloud& cloud, std::size_t height,
                      std::size_t width, double kept_fraction);

struct ProCurve {
  std::vector<double> fpr;  // non-decreasing, starts at 0
  std::vector<double> pro;
};

/// PRO curve of a threshold sweep with detection rule score >= t, pooled over
/// all images: one FPR over all anomaly-free pixels, PRO averaged over all
/// regions. Uses every unique score when there are at most 100000 of them,
/// otherwise 2000 quantile-spaced thresholds.
ProCurve pro_curve(std::span<const ScoreMap> maps, std::span<const GroundTruth> gts);

/// Area under a PRO staircase for FPR in [0, fpr_limit], divided by fpr_limit.
/// PRO holds its value until the next achieved FPR.
double integrate_pro(const ProCurve& curve, double fpr_limit);

double pro_auc(const ScoreMap& map, const GroundTruth& gt, double fpr_limit = 0.3);
double pro_auc_pooled(std::span<const ScoreMap> maps, std::span<const GroundTruth> gts, double fpr_limit = 0.3);

enum class ScoreNormalization {
  min_max,  // per cloud
  fixed,    // divide by a fixed scale
};

struct AnomalyParams {
  std::size_t k = 10;
  std::size_t m = 200;
  double l = 1.0;
  double alpha = 1.0;
  double z_quantile = 0.05;
  std::size_t max_points = 13000;
  std::uint64_t seed = 0;
  bool anisotropic = false;
  bool pre_registered = false;
  bool auto_connect = false;
  SigmaMode sigma_mode = SigmaMode::global;
  ScoreNormalization normalization = ScoreNormalization::min_max;
  double score_scale = 2.0;  // used with ScoreNormalization::fixed
  IcpOptions icp;
  SolverOptions solver;
};

struct AnomalyResult {
  ScoreMap map;
  ScoreMap baseline;                 // Euclidean nearest-distance map on the same registration
  PointCloud target;                 // foreground target after subsampling
  PointCloud source;                 // registered source
  std::vector<PointScore> scores;    // normalized, indices into `target`
  std::vector<PointScore> raw_scores;
  double registration_rms = 0.0;
  std::size_t zero_norm_rows = 0;
};

/// Source -> organized target scene. The target must carry a grid index; its
/// image size is `height` x `width`.
AnomalyResult anomaly_pipeline(const PointCloud& source, const PointCloud& target_scene, std::size_t height,
                               std::size_t width, const AnomalyParams& params);

/// Distance from each target point to its nearest source point.
std::vector<PointScore> euclidean_scores(const PointCloud& target, const PointCloud& source);

std::vector<PointScore> normalize_scores(std::vector<PointScore> scores, ScoreNormalization mode, double scale);

/// Image height and width implied by a grid index (max row + 1, max col + 1).
std::pair<std::size_t, std::size_t> grid_extent(const PointCloud& cloud);

std::string format_map_csv(const ScoreMap& map);
ScoreMap parse_map_csv(std::string_view text);
/// 16-bit binary PGM; values are clamped to [0, 1] and scaled to 65535.
std::string format_map_pgm(const ScoreMap& map);
ScoreMap parse_map_pgm(std::string_view data);
ScoreMap load_map(const std::string& path);

/// Binary mask from a PGM (P2 or P5, any depth) or a CSV grid; nonzero is anomalous.
GroundTruth parse_mask(std::string_view data, bool pgm);
GroundTruth load_mask(const std::string& path);

}  // namespace specmatch
