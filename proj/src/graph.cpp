#include "specmatch/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "specmatch/error.hpp"
#include "specmatch/kdtree.hpp"
#include "specmatch/text_io.hpp"

namespace specmatch {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

std::vector<Edge> bridge_components(const PointCloud& cloud, const std::vector<Edge>& edges) {
  const std::size_t n = cloud.size();
  DisjointSets sets(n);
  for (const auto& e : edges) sets.unite(e.i, e.j);
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t v = 0; v < n; ++v) members[sets.find(v)].push_back(v);

  std::vector<std::vector<std::size_t>> comps;
  for (auto& [root, list] : members) comps.push_back(std::move(list));

  // closest vertex pair for every pair of components
  std::vector<Edge> candidates;
  for (std::size_t a = 0; a < comps.size(); ++a) {
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(comps[a].size());
    for (auto v : comps[a]) pts.push_back(cloud.points[v]);
    KdTree tree(pts);
    for (std::size_t b = a + 1; b < comps.size(); ++b) {
      Edge best{0, 0, std::numeric_limits<double>::infinity(), 0.0};
      for (auto v : comps[b]) {
        const auto nb = tree.nearest(cloud.points[v]);
        const auto u = comps[a][nb.index];
        Edge cand{std::min(u, v), std::max(u, v), nb.dist_sq, 0.0};
        if (cand.dist_sq < best.dist_sq ||
            (cand.dist_sq == best.dist_sq && std::pair(cand.i, cand.j) < std::pair(best.i, best.j))) {
          best = cand;
        }
      }
      candidates.push_back(best);
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.dist_sq, x.i, x.j) < std::tie(y.dist_sq, y.i, y.j);
  });
  std::vector<Edge> added;
  for (const auto& c : candidates) {
    if (sets.unite(c.i, c.j)) added.push_back(c);
  }
  return added;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> knn_edges(const PointCloud& cloud, std::size_t k) {
  const std::size_t n = cloud.size();
  if (n < 2) throw Error(ErrorKind::precondition, "kNN graph needs at least 2 points");
  if (k == 0 || k >= n) {
    throw Error(ErrorKind::precondition,
                "k must satisfy 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  KdTree tree(cloud.points);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : tree.knn(cloud.points[i], k, i)) {
      pairs.emplace_back(std::min(i, nb.index), std::max(i, nb.index));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

Eigen::VectorXd recompute_degrees(std::size_t n, const std::vector<Edge>& edges) {
  // gather per vertex, then sum in ascending neighbour order
  std::vector<std::vector<std::pair<std::size_t, double>>> incident(n);
  for (const auto& e : edges) {
    incident[e.i].emplace_back(e.j, e.weight);
    incident[e.j].emplace_back(e.i, e.weight);
  }
  Eigen::VectorXd deg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(incident[v].begin(), incident[v].end());
    double s = 0.0;
    for (const auto& [u, w] : incident[v]) s += w;
    deg(static_cast<Eigen::Index>(v)) = s;
  }
  return deg;
}

std::size_t count_components(std::size_t n, const std::vector<Edge>& edges) {
  DisjointSets sets(n);
  std::size_t count = n;
  for (const auto& e : edges) {
    if (sets.unite(e.i, e.j)) --count;
  }
  return count;
}

WeightedGraph WeightedGraph::reweighted(double new_sigma_sq) const {
  if (!(new_sigma_sq > 0.0) || !std::isfinite(new_sigma_sq)) {
    throw Error(ErrorKind::precondition, "sigma_sq must be a positive finite number");
  }
  WeightedGraph g = *this;
  g.sigma_sq = new_sigma_sq;
  for (auto& e : g.edges) e.weight = std::exp(-e.dist_sq / new_sigma_sq);
  g.degrees = recompute_degrees(g.n, g.edges);
  return g;
}

WeightedGraph build_graph(const PointCloud& cloud, const GraphOptions& options) {
  validate(cloud);
  const auto pairs = knn_edges(cloud, options.k);

  WeightedGraph g;
  g.n = cloud.size();
  g.k = options.k;
  g.edges.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    g.edges.push_back({i, j, (cloud.points[i] - cloud.points[j]).squaredNorm(), 0.0});
  }

  g.components = count_components(g.n, g.edges);
  if (g.components > 1) {
    if (!options.auto_connect) {
      throw Error(ErrorKind::disconnected,
                  "kNN graph has " + std::to_string(g.components) + " connected components");
    }
    auto bridges = bridge_components(cloud, g.edges);
    g.edges.insert(g.edges.end(), bridges.begin(), bridges.end());
    std::sort(g.edges.begin(), g.edges.end(),
              [](const Edge& a, const Edge& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
    g.augmented = true;
  }

  double sigma_sq = 0.0;
  if (options.sigma_sq) {
    sigma_sq = *options.sigma_sq;
  } else {
    for (const auto& e : g.edges) sigma_sq = std::max(sigma_sq, e.dist_sq);
  }
  if (!(sigma_sq > 0.0)) {
    throw Error(ErrorKind::degenerate, "all edge lengths are zero; sigma^2 is undefined");
  }
  return g.reweighted(sigma_sq);
}

SparseMatrix WeightedGraph::adjacency() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * edges.size());
  for (const auto& e : edges) {
    trip.emplace_back(static_cast<int>(e.i), static_cast<int>(e.j), e.weight);
    trip.emplace_back(static_cast<int>(e.j), static_cast<int>(e.i), e.weight);
  }
  SparseMatrix w(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  w.setFromTriplets(trip.begin(), trip.end());
  return w;
}

SparseMatrix WeightedGraph::laplacian() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * edges.size() + n);
  for (const auto& e : edges) {
    trip.emplace_back(static_cast<int>(e.i), static_cast<int>(e.j), -e.weight);
    trip.emplace_back(static_cast<int>(e.j), static_cast<int>(e.i), -e.weight);
  }
  for (std::size_t v = 0; v < n; ++v) {
    trip.emplace_back(static_cast<int>(v), static_cast<int>(v), degrees(static_cast<Eigen::Index>(v)));
  }
  SparseMatrix l(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

Eigen::VectorXd laplacian_apply(const WeightedGraph& graph, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != graph.n) {
    throw Error(ErrorKind::dimension, "vector length " + std::to_string(v.size()) + " != graph size " +
                                          std::to_string(graph.n));
  }
  Eigen::VectorXd out = graph.degrees.cwiseProduct(v);
  for (const auto& e : graph.edges) {
    const auto i = static_cast<Eigen::Index>(e.i);
    const auto j = static_cast<Eigen::Index>(e.j);
    out(i) -= e.weight * v(j);
    out(j) -= e.weight * v(i);
  }
  return out;
}

std::string format_graph_csv(const WeightedGraph& graph) {
  std::string out = "n,k,sigma_sq\n";
  out += std::to_string(graph.n) + "," + std::to_string(graph.k) + "," + text::format_double(graph.sigma_sq, 17) +
         "\ni,j,weight\n";
  for (const auto& e : graph.edges) {
    out += std::to_string(e.i) + "," + std::to_string(e.j) + "," + text::format_double(e.weight, 17) + "\n";
  }
  return out;
}

}  // namespace specmatch
