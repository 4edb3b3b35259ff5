#include "specmatch/registration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "specmatch/error.hpp"
#include "specmatch/kdtree.hpp"
#include "specmatch/text_io.hpp"

#include <json.hpp>

namespace specmatch {

namespace {

using Eigen::Matrix3d;
using Eigen::Vector3d;

// Rank test on the PCA spectrum.
void require_full_rank(const PcaFrame& frame, const std::string& what) {
  if (!(frame.variances(2) > 1e-12 * frame.variances(0))) {
    throw Error(ErrorKind::degenerate, what + " has a degenerate (rank < 3) covariance");
  }
}

double mean_sq_to(const KdTree& tree, std::span<const Vector3d> points) {
  double s = 0.0;
  for (const auto& p : points) s += tree.nearest(p).dist_sq;
  return s;
}

// Optimal rotation R minimising sum |R a_i + t - b_i|^2 over proper rotations.
Matrix3d kabsch(const Matrix3d& cross_cov) {
  Eigen::JacobiSVD<Matrix3d> svd(cross_cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d d = Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixV() * d * svd.matrixU().transpose();
}

}  // namespace

PointCloud RigidTransform::apply(const PointCloud& cloud) const {
  PointCloud out = cloud;
  for (auto& p : out.points) p = apply(p);
  return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  // R1 (s1 (R2 (s2 x) + t2)) + t1 = (R1 R2)(s1 s2 x) + s1 R1 t2 + t1
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.scale = scale * other.scale;
  out.translation = scale * (rotation * other.translation) + translation;
  return out;
}

std::string format_transform_json(const RigidTransform& t) {
  nlohmann::ordered_json j;
  std::vector<double> r;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) r.push_back(t.rotation(i, c));
  j["rotation"] = r;
  j["translation"] = {t.translation.x(), t.translation.y(), t.translation.z()};
  j["scale"] = t.scale;
  return j.dump(2) + "\n";
}

RigidTransform parse_transform_json(std::string_view text_in) {
  RigidTransform t;
  try {
    auto j = nlohmann::json::parse(text_in);
    auto r = j.at("rotation").get<std::vector<double>>();
    auto tr = j.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || tr.size() != 3) throw Error(ErrorKind::parse, "transform JSON has wrong array sizes");
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c) t.rotation(i, c) = r[static_cast<std::size_t>(3 * i + c)];
    t.translation = Vector3d(tr[0], tr[1], tr[2]);
    t.scale = j.value("scale", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("transform JSON: ") + e.what());
  }
  if (!(t.scale > 0.0)) throw Error(ErrorKind::parse, "transform scale must be positive");
  if ((t.rotation.transpose() * t.rotation - Matrix3d::Identity()).norm() > 1e-6 || t.rotation.determinant() < 0.0) {
    throw Error(ErrorKind::parse, "transform rotation is not a proper rotation");
  }
  return t;
}

double symmetric_rms(const PointCloud& moving, const PointCloud& fixed) {
  KdTree fixed_tree(fixed.points);
  KdTree moving_tree(moving.points);
  const double total = mean_sq_to(fixed_tree, moving.points) + mean_sq_to(moving_tree, fixed.points);
  return std::sqrt(total / static_cast<double>(moving.size() + fixed.size()));
}

RigidTransform pca_align(const PointCloud& moving, const PointCloud& fixed) {
  validate(moving);
  validate(fixed);
  const auto fm = pca_frame(moving.points);
  const auto ff = pca_frame(fixed.points);
  require_full_rank(fm, "moving cloud");
  require_full_rank(ff, "fixed cloud");

  KdTree fixed_tree(fixed.points);
  RigidTransform best;
  double best_rms = std::numeric_limits<double>::infinity();
  const std::array<Vector3d, 4> sign_sets{Vector3d(1, 1, 1), Vector3d(1, -1, -1), Vector3d(-1, 1, -1),
                                          Vector3d(-1, -1, 1)};
  for (const auto& base : sign_sets) {
    Vector3d signs = base;
    Matrix3d r = ff.axes * signs.asDiagonal() * fm.axes.transpose();
    if (r.determinant() < 0.0) {
      // the two frames have opposite handedness; flip the last axis
      signs(2) = -signs(2);
      r = ff.axes * signs.asDiagonal() * fm.axes.transpose();
    }
    RigidTransform cand;
    cand.rotation = r;
    cand.translation = ff.centroid - r * fm.centroid;
    const double rms = symmetric_rms(cand.apply(moving), fixed);
    if (rms < best_rms) {
      best_rms = rms;
      best = cand;
    }
  }
  return best;
}

IcpResult icp_refine(const PointCloud& moving, const PointCloud& fixed, const RigidTransform& init,
                     const IcpOptions& options) {
  validate(moving);
  validate(fixed);
  if (!(init.scale > 0.0)) throw Error(ErrorKind::precondition, "initial transform scale must be positive");
  if (options.trim_fraction < 0.0 || options.trim_fraction >= 1.0) {
    throw Error(ErrorKind::precondition, "trim fraction must lie in [0, 1)");
  }
  const double conv_tol = options.conv_tol >= 0.0 ? options.conv_tol : 1e-8 * diameter(fixed.points);
  KdTree tree(fixed.points);
  const std::size_t n = moving.size();

  IcpResult result;
  result.transform = init;
  std::vector<Vector3d> current(n);
  std::vector<Neighbor> nn(n);
  auto correspond = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      current[i] = result.transform.apply(moving.points[i]);
      nn[i] = tree.nearest(current[i]);
      s += nn[i].dist_sq;
    }
    return std::sqrt(s / static_cast<double>(n));
  };

  double rms = correspond();
  result.rms_history.push_back(rms);
  std::vector<std::size_t> order(n);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t used = n;
    if (options.trim_fraction > 0.0) {
      used = std::max<std::size_t>(3, static_cast<std::size_t>(std::floor((1.0 - options.trim_fraction) * static_cast<double>(n))));
      used = std::min(used, n);
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(used - 1), order.end(),
                       [&](std::size_t a, std::size_t b) { return nn[a].dist_sq < nn[b].dist_sq; });
    }
    Vector3d ca = Vector3d::Zero(), cb = Vector3d::Zero();
    for (std::size_t u = 0; u < used; ++u) {
      ca += current[order[u]];
      cb += fixed.points[nn[order[u]].index];
    }
    ca /= static_cast<double>(used);
    cb /= static_cast<double>(used);
    Matrix3d h = Matrix3d::Zero();
    for (std::size_t u = 0; u < used; ++u) {
      h.noalias() += (current[order[u]] - ca) * (fixed.points[nn[order[u]].index] - cb).transpose();
    }
    const Matrix3d dr = kabsch(h);
    RigidTransform step;
    step.rotation = dr;
    step.translation = cb - dr * ca;
    const RigidTransform previous = result.transform;
    result.transform = step.compose(result.transform);
    const double next = correspond();
    ++result.iterations;
    if (next > rms) {
      // trimmed updates are not guaranteed to descend; keep the better iterate
      result.transform = previous;
      correspond();
      result.converged = true;
      break;
    }
    result.rms_history.push_back(next);
    const double improvement = rms - next;
    rms = next;
    if (improvement < conv_tol) {
      result.converged = true;
      break;
    }
  }
  result.rms = rms;
  return result;
}

PointCloud anisotropic_prescale(const PointCloud& moving, const PointCloud& fixed) {
  const auto fm = pca_frame(moving.points);
  const auto ff = pca_frame(fixed.points);
  require_full_rank(fm, "moving cloud");
  require_full_rank(ff, "fixed cloud");
  const Vector3d stretch = (ff.variances.cwiseQuotient(fm.variances)).cwiseSqrt();
  PointCloud out = moving;
  for (auto& p : out.points) {
    const Vector3d q = fm.to_frame(p);
    p = fm.from_frame(stretch.cwiseProduct(q));
  }
  return out;
}

double spectral_scale_factor(const PointCloud& source, const WeightedGraph& source_graph, const PointCloud& target,
                             const WeightedGraph& target_graph, std::size_t barycenter_count,
                             const SolverOptions& options) {
  const auto ls = fiedler_extent(source, source_graph, barycenter_count, options).length;
  const auto lt = fiedler_extent(target, target_graph, barycenter_count, options).length;
  if (!(lt > 0.0)) throw Error(ErrorKind::degenerate, "target Fiedler extent is zero");
  return ls / lt;
}

RegistrationResult register_rigid(const PointCloud& moving, const PointCloud& fixed, const IcpOptions& options) {
  const auto init = pca_align(moving, fixed);
  const auto icp = icp_refine(moving, fixed, init, options);
  RegistrationResult out;
  out.transform = icp.transform;
  out.aligned = icp.transform.apply(moving);
  out.rms = icp.rms;
  out.converged = icp.converged;
  return out;
}

RegistrationResult pass_through(const PointCloud& moving, const PointCloud& fixed) {
  validate(moving);
  validate(fixed);
  KdTree tree(fixed.points);
  RegistrationResult out;
  out.aligned = moving;
  out.rms = std::sqrt(mean_sq_to(tree, moving.points) / static_cast<double>(moving.size()));
  out.converged = true;
  return out;
}

}  // namespace specmatch
