#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specmatch/coupling.hpp"
#include "specmatch/pointcloud.hpp"
#include "specmatch/registration.hpp"

namespace specmatch {

enum class Side { left, right };

Side parse_side(std::string_view name);
std::string_view to_string(Side side);
Side opposite(Side side);

/// Reflection about the plane through the centroid orthogonal to the second
/// principal axis. Point order is preserved.
PointCloud mirror_pca(const PointCloud& cloud);

/// Random rigid jitter applied to each registered candidate after ICP. Used
/// to probe how sensitive the decision is to registration error.
struct PosePerturbation {
  double rotation_sd_deg = 0.0;     // angle about a uniformly random axis
  double translation_sd_frac = 0.0; // per-axis SD as a fraction of the target diameter
  std::uint64_t seed = 0;
};

struct BseParams {
  std::size_t k = 10;
  double l = 0.5;
  std::size_t m = 20;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::size_t barycenter_count = 1;
  SigmaMode sigma_mode = SigmaMode::global;
  bool mirror_target = false;  // mirror the target instead of the source
  bool auto_connect = false;
  bool pre_registered = false;  // skip PCA + ICP; inputs already share a frame
  IcpOptions icp;
  double failure_rms_fraction = 0.05;
  std::optional<PosePerturbation> perturbation;
  SolverOptions solver;
};

struct SidePrediction {
  Side side = Side::left;
  double d_same = 0.0;
  double d_mirror = 0.0;
  double margin = 0.0;  // d_mirror - d_same
  double scale_factor = 1.0;
  double rms_same = 0.0;
  double rms_mirror = 0.0;
  bool registration_failed = false;
  bool rank_deficient = false;
  BseParams params;
  Side source_side = Side::left;
};

SidePrediction estimate_side(const PointCloud& source, Side source_side, const PointCloud& target,
                             const BseParams& params);

std::string format_prediction_json(const SidePrediction& p);

struct BseBenchmarkRow {
  std::string source;
  std::size_t targets = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct BseBenchmark {
  std::vector<BseBenchmarkRow> rows;
  double mean_accuracy = 0.0;
  std::vector<std::pair<std::string, std::string>> pairs;  // (source, target) per prediction
  std::vector<SidePrediction> predictions;
};

struct LabeledCloud {
  std::string name;
  PointCloud cloud;
  Side side = Side::left;
};

/// Manifest CSV with "path,side" rows (an optional header line is skipped).
/// Relative paths resolve against the manifest's directory.
std::vector<LabeledCloud> load_bse_manifest(const std::string& manifest_path);

/// Every shape serves once as source against all the others as targets.
BseBenchmark bse_benchmark(const std::vector<LabeledCloud>& dataset, const BseParams& params);

/// "source,targets,correct,accuracy" rows plus a final "mean" row.
std::string format_benchmark_csv(const BseBenchmark& bench);

}  // namespace specmatch
