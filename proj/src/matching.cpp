#include "specmatch/matching.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "specmatch/error.hpp"

namespace specmatch {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kRankTolerance = 1e-10;
}

RestrictedBasis restricted_basis(const MatrixXd& slice, std::span<const std::size_t> rows) {
  const auto m = static_cast<std::size_t>(slice.cols());
  if (m == 0) throw Error(ErrorKind::precondition, "restricted basis of an empty embedding");
  if (rows.size() < m) {
    throw Error(ErrorKind::precondition, "need at least m=" + std::to_string(m) + " restricted rows, got " +
                                             std::to_string(rows.size()));
  }
  MatrixXd sub(static_cast<Index>(rows.size()), slice.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= static_cast<std::size_t>(slice.rows())) throw Error(ErrorKind::dimension, "row index out of range");
    sub.row(static_cast<Index>(r)) = slice.row(static_cast<Index>(rows[r]));
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
  qr.setThreshold(kRankTolerance);
  RestrictedBasis out;
  out.rank = static_cast<std::size_t>(qr.rank());
  out.rank_deficient = out.rank < m;
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(sub.rows(), static_cast<Index>(out.rank));
  out.q = std::move(q);
  return out;
}

VectorXd principal_angles(const MatrixXd& qa_in, const MatrixXd& qb_in) {
  if (qa_in.rows() != qb_in.rows()) throw Error(ErrorKind::dimension, "bases have different row counts");
  // the narrower basis is projected onto the wider one's complement
  const bool swap = qb_in.cols() > qa_in.cols();
  const MatrixXd& qa = swap ? qb_in : qa_in;
  const MatrixXd& qb = swap ? qa_in : qb_in;
  const Index r = qb.cols();
  if (r == 0) return VectorXd();

  Eigen::JacobiSVD<MatrixXd> cos_svd(qa.transpose() * qb);
  VectorXd cosines = cos_svd.singularValues();  // descending
  const MatrixXd residual = qb - qa * (qa.transpose() * qb);
  Eigen::JacobiSVD<MatrixXd> sin_svd(residual);
  VectorXd sines = sin_svd.singularValues();  // descending; pair in reverse
  VectorXd angles(r);
  for (Index i = 0; i < r; ++i) {
    const double c = std::clamp(cosines(i), 0.0, 1.0);
    const double s = std::clamp(sines(r - 1 - i), 0.0, 1.0);
    angles(i) = c * c < 0.5 ? std::acos(c) : std::asin(s);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

double grassmann_distance(const MatrixXd& qa, const MatrixXd& qb) { return principal_angles(qa, qb).norm(); }

MatchReport global_match(const CoupledEmbedding& coupled, const CouplingPlan& plan, const MatchMeta& meta) {
  if (coupled.shape_count() != plan.source_count() + 1) {
    throw Error(ErrorKind::dimension, "embedding and plan disagree on the number of shapes");
  }
  MatchReport report;
  report.mode = MatchReport::Mode::global;
  report.meta = meta;
  const auto target = restricted_basis(coupled.slice(0), plan.target_subset);
  for (std::size_t s = 0; s < plan.source_count(); ++s) {
    const auto source = restricted_basis(coupled.slice(s + 1), plan.source_matches[s]);
    report.distances.push_back(grassmann_distance(target.q, source.q));
    report.rank_deficient.push_back(target.rank_deficient || source.rank_deficient || target.rank != source.rank);
  }
  report.best = static_cast<std::size_t>(
      std::min_element(report.distances.begin(), report.distances.end()) - report.distances.begin());
  return report;
}

double cosine_distance(const VectorXd& u, const VectorXd& v, bool* zero_norm) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (zero_norm) *zero_norm = false;
  if (nu == 0.0 || nv == 0.0) {
    if (zero_norm) *zero_norm = true;
    return 1.0;
  }
  return std::clamp(1.0 - u.dot(v) / (nu * nv), 0.0, 2.0);
}

MatchReport pointwise_scores(const CoupledEmbedding& coupled, const CouplingPlan& plan, std::size_t source_index,
                             const MatchMeta& meta) {
  if (source_index >= plan.source_count() || source_index + 1 >= coupled.shape_count()) {
    throw Error(ErrorKind::precondition, "source index " + std::to_string(source_index) + " out of range");
  }
  MatchReport report;
  report.mode = MatchReport::Mode::pointwise;
  report.meta = meta;
  const MatrixXd target = coupled.slice(0);
  const MatrixXd source = coupled.slice(source_index + 1);
  const auto& matches = plan.source_matches[source_index];
  report.per_point.reserve(plan.pair_count());
  for (std::size_t j = 0; j < plan.pair_count(); ++j) {
    bool zero = false;
    const double s = cosine_distance(target.row(static_cast<Index>(plan.target_subset[j])).transpose(),
                                     source.row(static_cast<Index>(matches[j])).transpose(), &zero);
    if (zero) ++report.zero_norm_rows;
    report.per_point.push_back({plan.target_subset[j], s});
  }
  return report;
}

}  // namespace specmatch
