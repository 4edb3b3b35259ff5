#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "specmatch/graph.hpp"
#include "specmatch/pointcloud.hpp"

namespace specmatch {

/// Smallest eigenpairs of L phi = lambda B phi. Columns of `eigenvectors` are
/// B-orthonormal and ordered by ascending eigenvalue. Each column's largest
/// magnitude entry is made positive; inside a cluster of (numerically) equal
/// eigenvalues the individual columns are only defined up to rotation.
struct SpectralEmbedding {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  bool b_normalized = true;

  // diagnostics
  double max_residual = 0.0;  // max_i ||L phi_i - lambda_i B phi_i|| / ||B phi_i||
  std::size_t iterations = 0;
  bool dense = true;

  std::size_t size() const { return static_cast<std::size_t>(eigenvectors.rows()); }
  std::size_t count() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

struct SolverOptions {
  double tol = 1e-8;                 // relative residual
  std::size_t dense_below = 512;     // problems smaller than this use a dense solve
  std::uint64_t seed = 42;           // starting block for the iterative solver
  std::optional<std::size_t> max_operator_applications;  // default 50 * count * sqrt(n) per block column
};

/// `laplacian` must be symmetric; `mass` strictly positive. Throws
/// Error{precondition} for bad arguments and Error{convergence} when the
/// iterative solver exhausts its budget.
SpectralEmbedding solve_smallest(const SparseMatrix& laplacian, const Eigen::VectorXd& mass, std::size_t count,
                                 const SolverOptions& options = {});

/// Graph convenience: B = D.
SpectralEmbedding solve_smallest(const WeightedGraph& graph, std::size_t count, const SolverOptions& options = {});

/// Columns phi_1..phi_m (phi_0 dropped); row i embeds vertex i.
Eigen::MatrixXd eigenmaps(const SpectralEmbedding& emb, std::size_t m);

struct FiedlerExtent {
  double length = 0.0;
  Eigen::Vector3d x_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d x_max = Eigen::Vector3d::Zero();
};

/// Rough longitudinal extent of a shape: barycentres of the points carrying
/// the `barycenter_count` smallest and largest Fiedler entries, and their
/// distance.
FiedlerExtent fiedler_extent(const PointCloud& cloud, const WeightedGraph& graph, std::size_t barycenter_count,
                             const SolverOptions& options = {});
FiedlerExtent fiedler_extent(const PointCloud& cloud, const Eigen::VectorXd& fiedler, std::size_t barycenter_count);

struct ModalLengths {
  std::vector<double> lengths;                  // L_0 .. L_{count-1}, L_0 = +inf
  std::vector<std::size_t> zero_gradient_modes;  // modes k >= 1 reported as +inf
};

/// L_k = ||phi_k|| / ||grad phi_k||_G with the graph gradient taken over the
/// edges of `graph` using Euclidean edge lengths from `cloud`. Zero-length
/// edges (duplicate points) carry no gradient information and are skipped.
ModalLengths modal_lengths(const PointCloud& cloud, const WeightedGraph& graph, const SpectralEmbedding& emb);

/// First row: eigenvalues; then one row per vertex.
std::string format_embedding_csv(const SpectralEmbedding& emb);
SpectralEmbedding parse_embedding_csv(std::string_view text);

}  // namespace specmatch
