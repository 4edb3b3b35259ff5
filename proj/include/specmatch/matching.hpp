#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "specmatch/coupling.hpp"

namespace specmatch {

/// Orthonormal basis of the column space of slice(rows, :).
struct RestrictedBasis {
  Eigen::MatrixXd q;     // |rows| x rank
  std::size_t rank = 0;
  bool rank_deficient = false;
};

RestrictedBasis restricted_basis(const Eigen::MatrixXd& slice, std::span<const std::size_t> rows);

/// Principal angles between the column spaces of two orthonormal bases with
/// the same row count, ascending. Small angles come from sines and large
/// ones from cosines, so both ends are accurate.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& qa, const Eigen::MatrixXd& qb);

/// Geodesic Grassmann distance sqrt(sum theta_i^2) over the min(r_a, r_b)
/// principal angles.
double grassmann_distance(const Eigen::MatrixXd& qa, const Eigen::MatrixXd& qb);

struct MatchMeta {
  std::size_t m = 0;
  double l = 0.0;
  std::size_t k = 0;
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

struct PointScore {
  std::size_t target_index = 0;
  double score = 0.0;  // cosine distance in [0, 2]
};

struct MatchReport {
  enum class Mode { global, pointwise };
  Mode mode = Mode::global;
  std::vector<double> distances;      // global: one per source, declaration order
  std::vector<bool> rank_deficient;   // global: per source
  std::size_t best = 0;               // global: argmin, ties to the earlier source
  std::vector<PointScore> per_point;  // pointwise
  std::size_t zero_norm_rows = 0;     // pointwise: rows scored 1 because an embedding vanished
  MatchMeta meta;
};

/// Grassmann distance between the target's and every source's restricted
/// eigenmaps; `best` is the closest source.
MatchReport global_match(const CoupledEmbedding& coupled, const CouplingPlan& plan, const MatchMeta& meta = {});

/// Cosine distance 1 - <u, v> / (|u||v|) between the embeddings of each
/// cross-connected pair of the target and source `source_index`.
MatchReport pointwise_scores(const CoupledEmbedding& coupled, const CouplingPlan& plan, std::size_t source_index,
                             const MatchMeta& meta = {});

double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v, bool* zero_norm = nullptr);

}  // namespace specmatch
