#pragma once

// Deterministic synthetic shapes and scenes for the tests.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "specmatch/anomaly.hpp"
#include "specmatch/pointcloud.hpp"
#include "specmatch/random.hpp"

namespace synth {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using specmatch::PointCloud;

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double unit() { return specmatch::uniform_unit(engine); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  double normal() { return specmatch::standard_normal(engine); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(specmatch::uniform_below(engine, n)); }
};

inline Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline Matrix3d rotation_about(const Vector3d& axis, double degrees) {
  return Eigen::AngleAxisd(degrees * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
}

inline PointCloud transformed(const PointCloud& c, const Matrix3d& r, const Vector3d& t, double scale = 1.0) {
  PointCloud out = c;
  for (auto& p : out.points) p = r * (scale * p) + t;
  return out;
}

inline PointCloud scaled(const PointCloud& c, double s) {
  return transformed(c, Matrix3d::Identity(), Vector3d::Zero(), s);
}

inline PointCloud with_noise(const PointCloud& c, double sd, Rng& rng) {
  PointCloud out = c;
  for (auto& p : out.points) p += sd * Vector3d(rng.normal(), rng.normal(), rng.normal());
  return out;
}

inline PointCloud permuted(const PointCloud& c, const std::vector<std::size_t>& perm) {
  PointCloud out = c;
  for (std::size_t i = 0; i < perm.size(); ++i) out.points[i] = c.points[perm[i]];
  return out;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, Vector3d extent = Vector3d(1, 1, 1)) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(0, extent.x()), rng.uniform(0, extent.y()), rng.uniform(0, extent.z()));
  }
  return c;
}

// Random blob with anisotropic extent: a few Gaussian lumps, connected under
// kNN for moderate k.
inline PointCloud random_shape(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector3d> centers;
  for (int i = 0; i < 4; ++i) centers.emplace_back(rng.uniform(0, 3), rng.uniform(0, 1.5), rng.uniform(0, 1));
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = centers[i % centers.size()];
    c.points.push_back(m + 0.6 * Vector3d(rng.normal(), rng.normal(), rng.normal()));
  }
  return c;
}

inline PointCloud fibonacci_sphere(std::size_t n, double radius) {
  PointCloud c;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - y * y);
    const double th = golden * static_cast<double>(i);
    c.points.emplace_back(radius * r * std::cos(th), radius * y, radius * r * std::sin(th));
  }
  return c;
}

// Thin rod along +x from 0 to `length`; the cross-section jitter keeps the
// covariance full rank.
inline PointCloud segment(std::size_t n, double length, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = length * static_cast<double>(i) / static_cast<double>(n - 1);
    c.points.emplace_back(x, 0.02 * length * rng.uniform(-1, 1), 0.01 * length * rng.uniform(-1, 1));
  }
  return c;
}

// A bone-like tube around a curve with torsion, so it has no mirror
// symmetry; chirality -1 is the reflected shape. Stratified surface samples:
// rings along the curve, each point jittered inside its cell by `seed`.
inline PointCloud chiral_tube(std::size_t n, int chirality, std::uint64_t seed, double jitter = 0.5) {
  Rng rng(seed);
  PointCloud c;
  const double pi = std::numbers::pi;
  const std::size_t per_ring = 16;
  const std::size_t rings = (n + per_ring - 1) / per_ring;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ring = i / per_ring, slot = i % per_ring;
    const double t = (static_cast<double>(ring) + 0.5 + jitter * rng.uniform(-1, 1)) / static_cast<double>(rings);
    const double a = 2.0 * pi * (static_cast<double>(slot) + 0.5 * static_cast<double>(ring % 2) + jitter * rng.uniform(-1, 1)) /
                     static_cast<double>(per_ring);
    const Vector3d center(10.0 * t, 1.6 * std::sin(1.5 * pi * t), 1.0 * (1.0 - std::cos(1.5 * pi * t)));
    const Vector3d tangent =
        Vector3d(10.0, 1.6 * 1.5 * pi * std::cos(1.5 * pi * t), 1.0 * 1.5 * pi * std::sin(1.5 * pi * t)).normalized();
    Vector3d u = tangent.cross(Vector3d::UnitZ()).normalized();
    const Vector3d v = tangent.cross(u);
    // thicker head at t = 1, plus a lateral knob near t = 0.25
    double r = 0.45 + 0.35 * t * t;
    const double knob = std::exp(-std::pow((t - 0.25) / 0.06, 2)) * std::pow(std::max(0.0, std::cos(a - 1.0)), 2);
    r += 0.45 * knob;
    Vector3d p = center + r * (std::cos(a) * u + std::sin(a) * v);
    if (chirality < 0) p.z() = -p.z();
    c.points.push_back(p);
  }
  return c;
}

// Top view of a unit sphere whose centre sits at height `center_z` over the
// support plane z = 0 (negative: only a cap shows), sampled on a size x size
// grid over [-half_extent, half_extent]^2 with a random sub-pixel offset.
// Optionally a bump raises a spherical cap covering `bump_area_fraction` of
// the visible surface by `bump_height` along the normal: full height on the
// inner `plateau` share of its angular radius, smooth shoulders outside.
struct SphereScene {
  PointCloud cloud;           // organized
  specmatch::GroundTruth gt;  // exact bump mask (no regions for a defect-free scan)
  std::size_t height = 0;
  std::size_t width = 0;
  double plane_fraction = 0.0;  // share of pixels on the support plane
};

struct SceneOptions {
  std::size_t size = 72;
  double half_extent = 1.2;
  double center_z = -0.5;
  bool bump = true;
  double bump_area_fraction = 0.05;
  double bump_height = 0.03;
  double plateau = 0.7;
  double noise = 0.0;
  double jitter = 0.0;  // per-pixel sampling offset, in pixels (uniform in +-jitter/2)
  std::uint64_t seed = 1;        // placement, bump location, jitter
  std::uint64_t noise_seed = 0;  // sensor noise
};

inline SphereScene sphere_scene(const SceneOptions& o) {
  Rng rng(o.seed);
  Rng noise_rng(o.noise_seed);
  const double pi = std::numbers::pi;
  const double dx = rng.uniform(-0.5, 0.5), dy = rng.uniform(-0.5, 0.5);
  // visible polar angles: [0, theta_max]; area 2 pi (1 - cos theta_max)
  const double cos_max = std::clamp(-o.center_z, -1.0, 1.0);
  const double theta = std::acos(1.0 - o.bump_area_fraction * (1.0 - cos_max));
  const double theta_max = std::acos(cos_max);
  const double polar = rng.uniform(0.0, std::max(0.0, 0.75 * theta_max - theta));
  const double azimuth = rng.uniform(0.0, 2.0 * pi);
  const Vector3d bump_dir(std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth), std::cos(polar));

  SphereScene s;
  s.height = s.width = o.size;
  s.cloud.grid_index.emplace();
  std::vector<std::uint8_t> mask(o.size * o.size, 0);
  std::size_t plane = 0;
  const double pixel = 2.0 * o.half_extent / static_cast<double>(o.size);
  for (std::size_t r = 0; r < o.size; ++r) {
    for (std::size_t c = 0; c < o.size; ++c) {
      const double jx = o.jitter * rng.uniform(-0.5, 0.5), jy = o.jitter * rng.uniform(-0.5, 0.5);
      const double x = -o.half_extent + (static_cast<double>(c) + 0.5 + dx + jx) * pixel;
      const double y = -o.half_extent + (static_cast<double>(r) + 0.5 + dy + jy) * pixel;
      const double rr = x * x + y * y;
      Vector3d p(x, y, 0.0);
      const double top = rr < 1.0 ? o.center_z + std::sqrt(1.0 - rr) : -1.0;
      if (top > 0.0) {
        const Vector3d normal(x, y, std::sqrt(1.0 - rr));
        p = Vector3d(0, 0, o.center_z) + normal;
        if (o.bump) {
          const double phi = std::acos(std::clamp(normal.dot(bump_dir), -1.0, 1.0));
          if (phi <= theta) {
            mask[r * o.size + c] = 1;
            const double u = phi / theta;
            const double f =
                u <= o.plateau ? 1.0 : std::pow(std::cos((u - o.plateau) / (1.0 - o.plateau) * pi / 2.0), 2);
            p += o.bump_height * f * normal;
          }
        }
      } else {
        ++plane;
      }
      if (o.noise > 0.0) p += o.noise * Vector3d(noise_rng.normal(), noise_rng.normal(), noise_rng.normal());
      s.cloud.points.push_back(p);
      s.cloud.grid_index->push_back({static_cast<int>(r), static_cast<int>(c)});
    }
  }
  s.plane_fraction = static_cast<double>(plane) / static_cast<double>(o.size * o.size);
  s.gt = specmatch::ground_truth_from_mask(o.size, o.size, std::move(mask));
  return s;
}

}  // namespace synth
