#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace specmatch {

struct Neighbor {
  std::size_t index = 0;
  double dist_sq = 0.0;
};

/// Exact k-nearest-neighbour index over a fixed point set. Distance ties are
/// broken toward the lower point index. Sets smaller than `kBruteForceBelow`
/// are kept in a single leaf, so queries are a plain linear scan there.
class KdTree {
 public:
  static constexpr std::size_t kBruteForceBelow = 512;

  explicit KdTree(std::span<const Eigen::Vector3d> points);

  std::size_t size() const { return points_.size(); }

  /// The k nearest points to `query`, closest first. `exclude` (if < size())
  /// is skipped, which is how a point's own entry is left out.
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k,
                            std::size_t exclude = std::numeric_limits<std::size_t>::max()) const;

  Neighbor nearest(const Eigen::Vector3d& query) const;

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_
    int axis = -1;                   // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 16;
};

}  // namespace specmatch
