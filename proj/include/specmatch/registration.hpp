#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "specmatch/eigensolve.hpp"
#include "specmatch/graph.hpp"
#include "specmatch/pointcloud.hpp"

namespace specmatch {

/// x -> rotation * (scale * x) + translation, with a proper rotation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * (scale * p) + translation; }
  PointCloud apply(const PointCloud& cloud) const;
  /// (this * other)(x) = this(other(x)).
  RigidTransform compose(const RigidTransform& other) const;

  static RigidTransform identity() { return {}; }
};

std::string format_transform_json(const RigidTransform& t);
RigidTransform parse_transform_json(std::string_view text);

/// sqrt of the mean squared nearest-neighbour distance, pooled over both
/// directions (moving -> fixed and fixed -> moving).
double symmetric_rms(const PointCloud& moving, const PointCloud& fixed);

/// Coarse alignment: maps moving's centroid and principal frame onto fixed's.
/// The four proper axis-sign combinations are tried and the one with the
/// lowest symmetric nearest-neighbour RMS is kept. Throws Error{degenerate}
/// when either covariance has rank < 3.
RigidTransform pca_align(const PointCloud& moving, const PointCloud& fixed);

struct IcpOptions {
  std::size_t max_iters = 100;
  double conv_tol = -1.0;      // absolute RMS improvement; < 0 means 1e-8 * diameter(fixed)
  double trim_fraction = 0.0;  // worst correspondences dropped from each Procrustes update
};

struct IcpResult {
  RigidTransform transform;
  double rms = 0.0;             // moving -> fixed nearest-neighbour RMS at `transform`
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> rms_history;  // rms before the first update, then after each update
};

/// Point-to-point ICP with a closed-form (Kabsch) rotation update. The scale
/// of `init` is kept fixed.
IcpResult icp_refine(const PointCloud& moving, const PointCloud& fixed, const RigidTransform& init,
                     const IcpOptions& options = {});

/// Stretches `moving` along its own principal axes so the per-axis standard
/// deviations match those of `fixed`. A coarse stand-in for affine
/// registration; the result is re-centred on moving's centroid.
PointCloud anisotropic_prescale(const PointCloud& moving, const PointCloud& fixed);

/// Ratio L_source / L_target of the Fiedler extents of the two shapes.
double spectral_scale_factor(const PointCloud& source, const WeightedGraph& source_graph, const PointCloud& target,
                             const WeightedGraph& target_graph, std::size_t barycenter_count = 1,
                             const SolverOptions& options = {});

struct RegistrationResult {
  PointCloud aligned;
  RigidTransform transform;
  double rms = 0.0;
  bool converged = false;
};

/// pca_align followed by icp_refine.
RegistrationResult register_rigid(const PointCloud& moving, const PointCloud& fixed, const IcpOptions& options = {});

/// For inputs that are already registered: coordinates are kept bit-identical
/// and only the moving -> fixed RMS is measured.
RegistrationResult pass_through(const PointCloud& moving, const PointCloud& fixed);

}  // namespace specmatch
