#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "specmatch/pointcloud.hpp"

namespace specmatch {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Edge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  double dist_sq = 0.0;
  double weight = 0.0;
};

/// Undirected kNN graph with RBF weights w_ij = exp(-d_ij^2 / sigma_sq).
struct WeightedGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  double sigma_sq = 0.0;
  std::vector<Edge> edges;  // sorted by (i, j), no duplicates
  Eigen::VectorXd degrees;
  std::size_t components = 1;
  bool augmented = false;  // true when bridging edges were added to connect components

  /// Same topology and distances, weights recomputed for another sigma^2.
  WeightedGraph reweighted(double new_sigma_sq) const;

  SparseMatrix adjacency() const;
  SparseMatrix laplacian() const;
};

struct GraphOptions {
  std::size_t k = 10;
  std::optional<double> sigma_sq;  // default: largest squared edge length
  bool auto_connect = false;
};

/// Union-symmetrized kNN edge set: {i, j} is present when either endpoint is
/// among the other's k nearest neighbours. Pairs are returned sorted, i < j.
std::vector<std::pair<std::size_t, std::size_t>> knn_edges(const PointCloud& cloud, std::size_t k);

/// Throws Error{disconnected} when the kNN graph has several components,
/// unless `auto_connect` is set, in which case the shortest bridging edges
/// between components are added (greedily, Kruskal order) and the graph is
/// flagged `augmented`.
WeightedGraph build_graph(const PointCloud& cloud, const GraphOptions& options = {});

/// (D - W) v.
Eigen::VectorXd laplacian_apply(const WeightedGraph& graph, const Eigen::VectorXd& v);

/// Degrees as row sums of W, accumulated in ascending neighbour order.
Eigen::VectorXd recompute_degrees(std::size_t n, const std::vector<Edge>& edges);

std::size_t count_components(std::size_t n, const std::vector<Edge>& edges);

/// Edge list CSV: "n,k,sigma_sq" header row and values, then "i,j,weight" rows.
std::string format_graph_csv(const WeightedGraph& graph);

}  // namespace specmatch
