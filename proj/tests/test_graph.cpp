#include <doctest.h>

#include <cmath>
#include <set>

#include "specmatch/error.hpp"
#include "specmatch/graph.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace specmatch;

namespace {

PointCloud line(std::initializer_list<double> xs) {
  PointCloud c;
  for (double x : xs) c.points.emplace_back(x, 0.0, 0.0);
  return c;
}

std::set<std::pair<std::size_t, std::size_t>> edge_set(const WeightedGraph& g) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const auto& e : g.edges) out.emplace(e.i, e.j);
  return out;
}

const double kE1 = std::exp(-1.0);

}  // namespace

TEST_CASE("kNN edges on small fixtures") {
  CHECK(edge_set(build_graph(line({0.0, 1.0, 2.5}), {.k = 1})) ==
        std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 2}});

  PointCloud square;
  square.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  CHECK(edge_set(build_graph(square, {.k = 2})) ==
        std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {0, 2}, {1, 3}, {2, 3}});

  const auto c = synth::random_cloud(12, 4);
  CHECK(build_graph(c, {.k = 11}).edges.size() == 66);
}

TEST_CASE("kNN graph matches brute force on random clouds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = synth::random_cloud(150, seed);
    for (std::size_t k : {3u, 10u}) {
      const auto raw = knn_edges(c, k);
      CHECK(std::set<std::pair<std::size_t, std::size_t>>(raw.begin(), raw.end()) == oracle::knn_edges(c, k));
      // bridging only adds edges
      const auto g = build_graph(c, {.k = k, .auto_connect = true});
      CHECK(g.edges.size() >= raw.size());
    }
  }
}

TEST_CASE("edges are sorted, unique and weighted by the largest squared length") {
  const auto c = synth::random_cloud(300, 9);
  const auto g = build_graph(c, {.k = 10});
  double max_d2 = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    CHECK(edge.i < edge.j);
    if (e) CHECK(std::pair(g.edges[e - 1].i, g.edges[e - 1].j) < std::pair(edge.i, edge.j));
    max_d2 = std::max(max_d2, edge.dist_sq);
  }
  CHECK(g.sigma_sq == max_d2);
  const auto w = oracle::dense_weights(c, oracle::knn_edges(c, 10), max_d2);
  for (const auto& e : g.edges) {
    CHECK(e.weight == doctest::Approx(w(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j))).epsilon(1e-14));
    CHECK(e.weight > 0.0);
    CHECK(e.weight <= 1.0);
  }
  const Eigen::VectorXd deg = w.rowwise().sum();
  CHECK((g.degrees - deg).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("RBF weights on hand-checked fixtures") {
  const auto two = build_graph(line({0.0, 0.3}), {.k = 1});
  REQUIRE(two.edges.size() == 1);
  CHECK(two.edges[0].weight == doctest::Approx(0.367879).epsilon(1e-6));

  PointCloud dup;
  dup.points = {{0, 0, 0}, {0, 0, 0}, {1, 0, 0}};
  const auto d = build_graph(dup, {.k = 1});
  REQUIRE(d.edges.size() == 2);
  CHECK(d.edges[0].weight == 1.0);
  CHECK(d.edges[1].weight == doctest::Approx(kE1));

  const auto path = build_graph(line({0.0, 1.0, 2.0}), {.k = 1, .sigma_sq = 1.0});
  REQUIRE(path.edges.size() == 2);
  CHECK(path.edges[0].weight == doctest::Approx(kE1));
  CHECK(path.edges[1].weight == doctest::Approx(kE1));
  CHECK(path.degrees(0) == doctest::Approx(kE1));
  CHECK(path.degrees(1) == doctest::Approx(2 * kE1));
  CHECK(path.degrees(2) == doctest::Approx(kE1));
}

TEST_CASE("Laplacian product") {
  const auto path = build_graph(line({0.0, 1.0, 2.0}), {.k = 1, .sigma_sq = 1.0});
  const auto zero = laplacian_apply(path, Eigen::VectorXd::Constant(3, 4.2));
  CHECK(zero.cwiseAbs().maxCoeff() < 1e-15);
  const auto r = laplacian_apply(path, Eigen::Vector3d(1, 0, 0));
  CHECK(r(0) == doctest::Approx(kE1));
  CHECK(r(1) == doctest::Approx(-kE1));
  CHECK(r(2) == 0.0);

  const auto c = synth::random_cloud(80, 2);
  const auto g = build_graph(c, {.k = 6, .auto_connect = true});
  const auto w = oracle::dense_weights(c, oracle::knn_edges(c, 6), g.sigma_sq);
  const Eigen::MatrixXd l = Eigen::MatrixXd(w.rowwise().sum().asDiagonal()) - w;
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(80, -1.0, 3.0).array().sin();
  CHECK((laplacian_apply(g, v) - l * v).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(laplacian_apply(g, Eigen::VectorXd::Zero(3)), Error);
}

TEST_CASE("disconnected graphs are rejected unless bridged") {
  PointCloud c = line({0.0, 1.0, 2.0});
  for (double x : {100.0, 101.0, 102.0}) c.points.emplace_back(x, 0.0, 0.0);
  try {
    build_graph(c, {.k = 1});
    FAIL("expected disconnected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::disconnected);
  }
  const auto g = build_graph(c, {.k = 1, .auto_connect = true});
  CHECK(g.augmented);
  CHECK(count_components(g.n, g.edges) == 1);
}

TEST_CASE("invalid k is a precondition error") {
  const auto c = synth::random_cloud(5, 1);
  CHECK_THROWS_AS(build_graph(c, {.k = 5}), Error);
  CHECK_THROWS_AS(build_graph(c, {.k = 0}), Error);
}
