#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace specmatch {

/// Pixel provenance of a point sampled from an organized (range-image) scan.
struct GridIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Ordered set of 3D points. `grid_index`, when present, has one entry per
/// point and carries the (row, col) pixel each point came from.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::optional<std::vector<GridIndex>> grid_index;
  std::string name;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool organized() const { return grid_index.has_value(); }
};

enum class CloudFormat { ply_ascii, xyz_csv, organized_grid };

CloudFormat parse_cloud_format(std::string_view name);
/// Guesses the format from the file extension: .ply, .grid/.grid.csv, anything else xyz-csv.
CloudFormat format_from_extension(const std::string& path);

/// Checks the type invariants (non-empty, finite, grid_index consistent and
/// distinct). Throws Error on violation.
void validate(const PointCloud& cloud);

PointCloud parse_cloud(std::string_view text, CloudFormat format, std::string name = {});
PointCloud load_cloud(const std::string& path, CloudFormat format);
std::string format_cloud(const PointCloud& cloud, CloudFormat format);
void save_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format);

/// Principal-axis frame of a point set. Columns of `axes` are unit principal
/// directions sorted by decreasing variance; each is oriented so the point
/// coordinates along it have non-negative skewness.
struct PcaFrame {
  Eigen::Vector3d centroid;
  Eigen::Matrix3d axes;
  Eigen::Vector3d variances;

  Eigen::Vector3d to_frame(const Eigen::Vector3d& p) const { return axes.transpose() * (p - centroid); }
  Eigen::Vector3d from_frame(const Eigen::Vector3d& q) const { return centroid + axes * q; }
};

/// Throws Error{degenerate} if fewer than 4 points are given. Rank deficiency
/// is not checked here; callers that need a full frame test `variances`.
PcaFrame pca_frame(std::span<const Eigen::Vector3d> points);

/// Linear-interpolated quantile of `values` (q in [0, 1]).
double quantile(std::vector<double> values, double q);

/// Removes the flat support plane of a scan: points whose third principal
/// coordinate does not exceed the `z_quantile` quantile of that coordinate
/// are dropped. Survivors keep their original coordinates, order and grid
/// provenance.
PointCloud remove_background(const PointCloud& cloud, double z_quantile);

struct Subsample {
  PointCloud cloud;
  std::vector<std::size_t> kept_indices;  // ascending positions in the input
};

/// Uniform random subset of at most `max_points` points, without replacement.
/// Pure function of (cloud, max_points, seed).
Subsample subsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed);

/// Largest pairwise distance between points.
double diameter(std::span<const Eigen::Vector3d> points);

Eigen::Vector3d centroid(std::span<const Eigen::Vector3d> points);

}  // namespace specmatch
