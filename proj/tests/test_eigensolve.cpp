#include <doctest.h>

#include <cmath>
#include <limits>

#include "specmatch/eigensolve.hpp"
#include "specmatch/error.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace specmatch;

namespace {

SparseMatrix unit_path_laplacian() {
  Eigen::MatrixXd l(3, 3);
  l << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  return l.sparseView();
}

// Columns of `a` and `b` grouped by clusters of the reference eigenvalues;
// returns the largest principal angle over all clusters.
double cluster_angle(const Eigen::VectorXd& values, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     double gap = 1e-6) {
  double worst = 0.0;
  Eigen::Index start = 0;
  const Eigen::Index count = a.cols();
  while (start < count) {
    Eigen::Index end = start + 1;
    while (end < count && values(end) - values(end - 1) < gap) ++end;
    if (end == count && end < values.size() && values(end) - values(end - 1) < gap) break;  // cluster cut by count
    worst = std::max(worst, oracle::max_angle(a.middleCols(start, end - start), b.middleCols(start, end - start)));
    start = end;
  }
  return worst;
}

}  // namespace

TEST_CASE("unit-weight path graph has the normalized spectrum 0, 1, 2") {
  const auto emb = solve_smallest(unit_path_laplacian(), Eigen::Vector3d(1, 2, 1), 3);
  CHECK(emb.eigenvalues(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(emb.eigenvalues(1) == doctest::Approx(1.0));
  CHECK(emb.eigenvalues(2) == doctest::Approx(2.0));
  // B-orthonormal
  const Eigen::MatrixXd gram = emb.eigenvectors.transpose() * Eigen::Vector3d(1, 2, 1).asDiagonal() * emb.eigenvectors;
  CHECK((gram - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  const auto maps = eigenmaps(emb, 2);
  CHECK(maps.cols() == 2);
  CHECK((maps - emb.eigenvectors.rightCols(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(eigenmaps(emb, 3), Error);
}

TEST_CASE("first eigenvector is constant") {
  const auto g = build_graph(synth::random_cloud(120, 8), {.k = 8, .auto_connect = true});
  const auto emb = solve_smallest(g, 4);
  CHECK(std::abs(emb.eigenvalues(0)) < 1e-10);
  const Eigen::VectorXd phi0 = emb.eigenvectors.col(0);
  CHECK(phi0.maxCoeff() - phi0.minCoeff() < 1e-8);
  CHECK(phi0(0) > 0.0);
}

TEST_CASE("dense path matches the generalized dense oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = synth::random_shape(60, seed);
    const auto g = build_graph(c, {.k = 6, .auto_connect = true});
    const auto ref = oracle::generalized(Eigen::MatrixXd(g.laplacian()), g.degrees);
    const auto emb = solve_smallest(g, 10);
    CHECK((emb.eigenvalues - ref.values.head(10)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(cluster_angle(ref.values, emb.eigenvectors, ref.vectors.leftCols(10)) < 1e-6);
  }
}

TEST_CASE("iterative path matches the dense oracle") {
  const auto c = synth::random_shape(700, 21);
  const auto g = build_graph(c, {.k = 10, .auto_connect = true});
  const auto ref = oracle::generalized(Eigen::MatrixXd(g.laplacian()), g.degrees);
  SolverOptions opts;
  opts.dense_below = 0;
  const auto emb = solve_smallest(g, 12, opts);
  CHECK(!emb.dense);
  CHECK(emb.max_residual <= 1e-8);
  CHECK((emb.eigenvalues - ref.values.head(12)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(cluster_angle(ref.values, emb.eigenvectors, ref.vectors.leftCols(12)) < 1e-6);
}

TEST_CASE("solver preconditions") {
  CHECK_THROWS_AS(solve_smallest(unit_path_laplacian(), Eigen::Vector3d(1, 0, 1), 2), Error);
  CHECK_THROWS_AS(solve_smallest(unit_path_laplacian(), Eigen::Vector2d(1, 1), 2), Error);
  CHECK_THROWS_AS(solve_smallest(unit_path_laplacian(), Eigen::Vector3d(1, 2, 1), 4), Error);
}

TEST_CASE("Fiedler extent of a segment") {
  const auto c = synth::segment(800, 10.0, 3);
  const auto g = build_graph(c, {.k = 10});
  const auto ext = fiedler_extent(c, g, 1);
  CHECK(ext.length == doctest::Approx(10.0).epsilon(0.02));

  synth::Rng rng(5);
  const auto rotated = synth::transformed(c, synth::random_rotation(rng), Eigen::Vector3d(3, -2, 1));
  const auto rext = fiedler_extent(rotated, build_graph(rotated, {.k = 10}), 1);
  CHECK(std::abs(rext.length - ext.length) <= 1e-9 * ext.length);

  const auto emb = solve_smallest(g, 2);
  const Eigen::VectorXd f = emb.eigenvectors.col(1);
  CHECK(fiedler_extent(c, f, 1).length == fiedler_extent(c, Eigen::VectorXd(-f), 1).length);
  CHECK(fiedler_extent(c, f, 5).length == doctest::Approx(10.0).epsilon(0.05));
  CHECK_THROWS_AS(fiedler_extent(c, f, 0), Error);
}

TEST_CASE("modal lengths") {
  const auto c = synth::random_shape(300, 2);
  const auto g = build_graph(c, {.k = 10, .auto_connect = true});
  const auto emb = solve_smallest(g, 8);
  const auto ml = modal_lengths(c, g, emb);
  REQUIRE(ml.lengths.size() == 8);
  CHECK(ml.lengths[0] == std::numeric_limits<double>::infinity());
  CHECK(ml.zero_gradient_modes.empty());

  const double scale = 3.7;
  const auto sc = synth::scaled(c, scale);
  const auto sg = build_graph(sc, {.k = 10, .auto_connect = true});
  const auto sml = modal_lengths(sc, sg, solve_smallest(sg, 8));
  for (std::size_t k = 1; k < 8; ++k) {
    CHECK(std::abs(sml.lengths[k] - scale * ml.lengths[k]) <= 1e-9 * scale * ml.lengths[k]);
  }
}

TEST_CASE("embedding csv round trip") {
  const auto g = build_graph(synth::random_cloud(40, 3), {.k = 5, .auto_connect = true});
  const auto emb = solve_smallest(g, 5);
  const auto back = parse_embedding_csv(format_embedding_csv(emb));
  CHECK((back.eigenvalues - emb.eigenvalues).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.eigenvectors - emb.eigenvectors).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(parse_embedding_csv("0.1,0.2\n1,2\n3\n"), Error);
}
