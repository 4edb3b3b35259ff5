#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "specmatch/eigensolve.hpp"
#include "specmatch/graph.hpp"
#include "specmatch/pointcloud.hpp"

namespace specmatch {

/// Cross-connections between a target and N registered sources. Pair j of
/// source s joins target vertex target_subset[j] with source vertex
/// source_matches[s][j].
struct CouplingPlan {
  std::vector<std::size_t> target_subset;
  std::vector<std::vector<std::size_t>> source_matches;
  double fraction = 1.0;
  double alpha = 1.0;  // penalization of the cross-connection Laplacian
  std::uint64_t seed = 0;

  std::size_t pair_count() const { return target_subset.size(); }
  std::size_t source_count() const { return source_matches.size(); }
};

/// Number of target vertices a fraction selects: round(l * n), as an integer.
std::size_t coupling_count(double fraction, std::size_t target_size);

/// Draws round(l * n_T) distinct target vertices uniformly (ascending order;
/// all of them when l = 1) and matches each to its nearest vertex in every
/// source, ties toward the lower index. Sources must already be registered
/// into the target frame.
CouplingPlan plan_coupling(const PointCloud& target, std::span<const PointCloud> sources, double fraction,
                           std::uint64_t seed, double alpha = 1.0);

/// CSV: "l,alpha,seed" header and values, then "target_index,source_id,source_index" rows.
std::string format_plan_csv(const CouplingPlan& plan);
CouplingPlan parse_plan_csv(std::string_view text);

enum class SigmaMode {
  global,     // one sigma^2 = max squared length over all edges, cross-edges included
  per_shape,  // every shape keeps its own sigma^2; cross-edges use the target's
};

SigmaMode parse_sigma_mode(std::string_view name);
std::string_view to_string(SigmaMode mode);

/// L^C = L^U + alpha L^+ over vertices ordered [target, source_1, ..., source_N],
/// with B^C the block-diagonal of the per-shape (uncoupled) degrees.
struct CoupledSystem {
  SparseMatrix uncoupled;  // L^U
  SparseMatrix cross;      // L^+ (unscaled)
  SparseMatrix laplacian;  // L^C
  Eigen::VectorXd mass;    // diagonal of B^C
  std::vector<std::size_t> offsets;  // shape s occupies [offsets[s], offsets[s+1])
  double sigma_sq = 0.0;
  double alpha = 1.0;

  std::size_t shape_count() const { return offsets.size() - 1; }
  std::size_t size() const { return offsets.back(); }
};

CoupledSystem coupled_laplacian(const WeightedGraph& target_graph, std::span<const WeightedGraph> source_graphs,
                                const PointCloud& target, std::span<const PointCloud> sources,
                                const CouplingPlan& plan, SigmaMode sigma_mode = SigmaMode::global);

/// Global solution plus per-shape row slices of phi_1..phi_m.
struct CoupledEmbedding {
  SpectralEmbedding global;
  std::vector<std::size_t> offsets;
  std::size_t m = 0;

  std::size_t shape_count() const { return offsets.size() - 1; }
  /// Rows of shape `s` (0 = target), columns phi_1..phi_m.
  Eigen::MatrixXd slice(std::size_t s) const;
  /// Rows of shape `s`, all computed columns phi_0..phi_m.
  Eigen::MatrixXd full_slice(std::size_t s) const;
};

CoupledEmbedding coupled_eigenmaps(const CoupledSystem& system, std::size_t m, const SolverOptions& options = {});

}  // namespace specmatch
