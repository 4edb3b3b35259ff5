#include <doctest.h>

#include <cmath>

#include "specmatch/error.hpp"
#include "specmatch/registration.hpp"
#include "support/synthetic.hpp"

using namespace specmatch;

namespace {

// RMS over known correspondences
double paired_rms(const PointCloud& a, const PointCloud& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.points[i] - b.points[i]).squaredNorm();
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

TEST_CASE("rigid registration recovers a known pose") {
  synth::Rng rng(4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto fixed = synth::random_shape(600, seed);
    const auto moving = synth::transformed(fixed, synth::random_rotation(rng),
                                           Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * 5.0);
    const auto reg = register_rigid(moving, fixed);
    const double diam = diameter(fixed.points);
    CHECK(paired_rms(reg.transform.apply(moving), fixed) <= 1e-6 * diam);
    CHECK(paired_rms(reg.aligned, fixed) <= 1e-6 * diam);
    CHECK(reg.transform.rotation.determinant() == doctest::Approx(1.0));
  }
}

TEST_CASE("registering a cloud to itself is the identity") {
  const auto c = synth::random_shape(400, 9);
  const auto reg = register_rigid(c, c);
  CHECK((reg.transform.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(reg.transform.translation.norm() <= 1e-9);
  CHECK(reg.rms <= 1e-9);

  const auto icp = icp_refine(c, c, RigidTransform::identity());
  CHECK(icp.rms == 0.0);
  CHECK(icp.transform.translation.norm() <= 1e-12);
  CHECK(icp.converged);
}

TEST_CASE("coplanar clouds have a degenerate covariance") {
  PointCloud flat;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) flat.points.emplace_back(i, 0.5 * j, 0.0);
  }
  try {
    pca_align(flat, synth::random_shape(100, 1));
    FAIL("expected degenerate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate);
  }
}

TEST_CASE("ICP converges from a small rotation") {
  const auto fixed = synth::random_shape(800, 3);
  const Eigen::Vector3d c = centroid(fixed.points);
  const auto r = synth::rotation_about(Eigen::Vector3d(0.3, 1.0, -0.2), 5.0);
  const auto moving = synth::transformed(fixed, r, c - r * c);
  IcpOptions opts;
  opts.max_iters = 50;
  const auto icp = icp_refine(moving, fixed, RigidTransform::identity(), opts);
  CHECK(icp.rms <= 1e-6 * diameter(fixed.points));
  CHECK(icp.iterations <= 50);
  for (std::size_t i = 1; i < icp.rms_history.size(); ++i) CHECK(icp.rms_history[i] <= icp.rms_history[i - 1] + 1e-15);
}

TEST_CASE("trimmed ICP ignores an outlier cluster") {
  const auto fixed = synth::random_shape(600, 5);
  auto moving = synth::transformed(fixed, synth::rotation_about(Eigen::Vector3d(0, 0, 1), 3.0), Eigen::Vector3d(0.05, 0, 0));
  for (int i = 0; i < 30; ++i) moving.points.emplace_back(40.0 + 0.01 * i, 40.0, 40.0);
  IcpOptions opts;
  opts.trim_fraction = 0.1;
  const auto icp = icp_refine(moving, fixed, RigidTransform::identity(), opts);
  PointCloud core;
  core.points.assign(moving.points.begin(), moving.points.begin() + 600);
  CHECK(paired_rms(icp.transform.apply(core), fixed) <= 1e-6 * diameter(fixed.points));
}

TEST_CASE("spectral scale factor") {
  const auto a = synth::segment(600, 8.0, 1);
  const GraphOptions g{.k = 10};
  const auto ga = build_graph(a, g);
  CHECK(std::abs(spectral_scale_factor(a, ga, a, ga) - 1.0) <= 1e-9);

  const auto half = synth::scaled(a, 0.5);
  CHECK(spectral_scale_factor(a, ga, half, build_graph(half, g)) == doctest::Approx(2.0).epsilon(0.02));

  const auto b = synth::segment(700, 4.0, 2);
  CHECK(spectral_scale_factor(a, ga, b, build_graph(b, g)) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("anisotropic prescale matches per-axis spread") {
  const auto fixed = synth::random_shape(500, 2);
  auto moving = fixed;
  const auto frame = pca_frame(fixed.points);
  for (auto& p : moving.points) {
    Eigen::Vector3d q = frame.to_frame(p);
    q = q.cwiseProduct(Eigen::Vector3d(1.3, 0.8, 1.1));
    p = frame.from_frame(q);
  }
  const auto out = anisotropic_prescale(moving, fixed);
  const auto fo = pca_frame(out.points);
  CHECK((fo.variances - frame.variances).cwiseAbs().maxCoeff() <= 1e-9 * frame.variances(0));
  CHECK((centroid(out.points) - centroid(moving.points)).norm() <= 1e-9);
}

TEST_CASE("pass-through keeps coordinates") {
  const auto a = synth::random_shape(100, 1);
  const auto b = synth::random_shape(120, 2);
  const auto r = pass_through(a, b);
  CHECK(r.aligned.points == a.points);
  CHECK(r.rms > 0.0);
}

TEST_CASE("transform json round trip and validation") {
  synth::Rng rng(3);
  RigidTransform t;
  t.rotation = synth::random_rotation(rng);
  t.translation = Eigen::Vector3d(1.5, -2.25, 1e-7);
  t.scale = 1.75;
  const auto back = parse_transform_json(format_transform_json(t));
  CHECK((back.rotation - t.rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.translation - t.translation).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.scale == t.scale);

  const Eigen::Vector3d p(0.3, 0.1, -4.0);
  const auto twice = t.compose(t);
  CHECK((twice.apply(p) - t.apply(t.apply(p))).norm() <= 1e-12);

  CHECK_THROWS_AS(parse_transform_json(R"({"rotation":[[1,0,0],[0,1,0],[0,0,-1]],"translation":[0,0,0],"scale":1})"),
                  Error);
  CHECK_THROWS_AS(parse_transform_json("{"), Error);
}
