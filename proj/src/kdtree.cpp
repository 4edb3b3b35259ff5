#include "specmatch/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace specmatch {

namespace {

// (dist, index) lexicographic order, so ties prefer the lower index
bool closer(const Neighbor& a, const Neighbor& b) {
  return a.dist_sq < b.dist_sq || (a.dist_sq == b.dist_sq && a.index < b.index);
}

struct FartherFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};

}  // namespace

KdTree::KdTree(std::span<const Eigen::Vector3d> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (points_.size() < kBruteForceBelow) leaf_size_ = std::max<std::size_t>(points_.size(), 1);
  nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
  build(0, points_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a](axis) < points_[b](axis); });
  const double split = points_[order_[mid]](axis);
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<Neighbor> KdTree::knn(const Eigen::Vector3d& query, std::size_t k, std::size_t exclude) const {
  std::priority_queue<Neighbor, std::vector<Neighbor>, FartherFirst> heap;
  if (k == 0 || points_.empty()) return {};

  auto visit = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        if (idx == exclude) continue;
        Neighbor cand{idx, (points_[idx] - query).squaredNorm()};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (closer(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const double diff = query(node.axis) - node.split;
    const auto near = diff < 0 ? node.left : node.right;
    const auto far = diff < 0 ? node.right : node.left;
    self(self, near);
    // equal distance must still be explored: a tie may carry a lower index
    if (heap.size() < k || diff * diff <= heap.top().dist_sq) self(self, far);
  };
  visit(visit, 0);

  std::vector<Neighbor> out(heap.size());
  for (auto i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

Neighbor KdTree::nearest(const Eigen::Vector3d& query) const {
  auto n = knn(query, 1);
  return n.front();
}

}  // namespace specmatch
