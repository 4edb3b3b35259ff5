#include "specmatch/eigensolve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCore>

#include "specmatch/error.hpp"
#include "specmatch/random.hpp"
#include "specmatch/text_io.hpp"

namespace specmatch {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Symmetric reduction N = B^{-1/2} L B^{-1/2}.
SparseMatrix reduce(const SparseMatrix& laplacian, const VectorXd& inv_sqrt_mass) {
  SparseMatrix n = inv_sqrt_mass.asDiagonal() * laplacian * inv_sqrt_mass.asDiagonal();
  n.makeCompressed();
  return n;
}

double gershgorin_upper(const SparseMatrix& m) {
  VectorXd row_abs = VectorXd::Zero(m.rows());
  VectorXd diag = VectorXd::Zero(m.rows());
  for (Index c = 0; c < m.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
      if (it.row() == it.col()) {
        diag(it.row()) += it.value();
      } else {
        row_abs(it.row()) += std::abs(it.value());
      }
    }
  }
  return (diag + row_abs).maxCoeff();
}

MatrixXd orthonormalize(const MatrixXd& x) {
  Eigen::HouseholderQR<MatrixXd> qr(x);
  return qr.householderQ() * MatrixXd::Identity(x.rows(), x.cols());
}

MatrixXd random_block(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MatrixXd x(rows, cols);
  // Box-Muller on our own uniform source keeps the block library-independent
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      const double u1 = 1.0 - uniform_unit(rng);
      const double u2 = uniform_unit(rng);
      x(i, j) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
  }
  return x;
}

// Scaled Chebyshev filter damping the interval [lower, upper] and amplifying
// everything below `lower`; `low_end` estimates the bottom of the spectrum
// and is only used to keep the iterates well scaled.
MatrixXd chebyshev_filter(const SparseMatrix& op, const MatrixXd& x, int degree, double lower, double upper,
                          double low_end) {
  // row-major storage keeps each sparse row's block entries contiguous
  using RowBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::SparseMatrix<double, Eigen::RowMajor> a = op;
  const double e = (upper - lower) / 2.0;
  const double c = (upper + lower) / 2.0;
  double sigma = e / (low_end - c);
  const double tau = 2.0 / sigma;
  RowBlock prev = x;
  RowBlock cur = (a * prev - c * prev) * (sigma / e);
  RowBlock next(x.rows(), x.cols());
  for (int d = 2; d <= degree; ++d) {
    const double sigma_next = 1.0 / (tau - sigma);
    next.noalias() = a * cur;
    next = (next - c * cur) * (2.0 * sigma_next / e) - (sigma * sigma_next) * prev;
    prev.swap(cur);
    cur.swap(next);
    sigma = sigma_next;
  }
  return cur;
}

struct Ritz {
  MatrixXd vectors;
  MatrixXd op_vectors;
  VectorXd values;
};

Ritz rayleigh_ritz(const SparseMatrix& op, const MatrixXd& basis) {
  MatrixXd ax = op * basis;
  MatrixXd h = basis.transpose() * ax;
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(h);
  return {basis * eig.eigenvectors(), ax * eig.eigenvectors(), eig.eigenvalues()};
}

struct ReducedSolution {
  VectorXd values;
  MatrixXd vectors;  // orthonormal in the reduced (y) space
  std::size_t iterations = 0;
};

ReducedSolution dense_solve(const SparseMatrix& op, std::size_t count) {
  MatrixXd dense = MatrixXd(op);
  dense = 0.5 * (dense + dense.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(dense);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::convergence, "dense eigensolver failed");
  const auto c = static_cast<Index>(count);
  return {eig.eigenvalues().head(c), eig.eigenvectors().leftCols(c), 0};
}

ReducedSolution filtered_subspace_solve(const SparseMatrix& op, std::size_t count, std::size_t block,
                                        double tol_reduced, std::size_t budget, std::uint64_t seed) {
  const Index n = op.rows();
  const auto c = static_cast<Index>(count);
  const auto b = static_cast<Index>(block);
  const double upper = gershgorin_upper(op) * (1.0 + 1e-12) + 1e-300;

  Ritz ritz = rayleigh_ritz(op, orthonormalize(random_block(n, b, seed)));
  std::size_t applications = 0;
  std::size_t iterations = 0;
  while (true) {
    MatrixXd resid = ritz.op_vectors.leftCols(c) - ritz.vectors.leftCols(c) * ritz.values.head(c).asDiagonal();
    const double worst = resid.colwise().norm().maxCoeff();
    if (worst <= tol_reduced) break;
    if (applications >= budget) {
      throw Error(ErrorKind::convergence, "eigensolver did not converge (residual " + std::to_string(worst) +
                                              " after " + std::to_string(iterations) + " iterations)");
    }
    const double lower = ritz.values(b - 1);
    const double low_end = std::min(ritz.values(0), lower - 1e-3 * (upper - lower));
    if (!(upper > lower)) {
      throw Error(ErrorKind::convergence, "Ritz values reached the spectral upper bound");
    }
    const double ell = ((upper + lower) / 2.0 - low_end) / ((upper - lower) / 2.0);
    int degree = static_cast<int>(std::ceil(std::acosh(1e6) / std::acosh(std::max(ell, 1.0 + 1e-12))));
    degree = std::clamp(degree, 4, 40);

    MatrixXd filtered = chebyshev_filter(op, ritz.vectors, degree, lower, upper, low_end);
    ritz = rayleigh_ritz(op, orthonormalize(filtered));
    applications += static_cast<std::size_t>(degree) + 1;
    ++iterations;
  }
  return {ritz.values.head(c), ritz.vectors.leftCols(c), iterations};
}

void fix_signs(MatrixXd& vectors) {
  for (Index j = 0; j < vectors.cols(); ++j) {
    Index arg = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

}  // namespace

SpectralEmbedding solve_smallest(const SparseMatrix& laplacian, const VectorXd& mass, std::size_t count,
                                 const SolverOptions& options) {
  const auto n = static_cast<std::size_t>(laplacian.rows());
  if (laplacian.rows() != laplacian.cols()) throw Error(ErrorKind::dimension, "operator is not square");
  if (static_cast<std::size_t>(mass.size()) != n) throw Error(ErrorKind::dimension, "mass size != operator size");
  if (count == 0 || count > n) {
    throw Error(ErrorKind::precondition,
                "requested " + std::to_string(count) + " eigenpairs of a size-" + std::to_string(n) + " problem");
  }
  if (!(mass.minCoeff() > 0.0) || !mass.allFinite()) {
    throw Error(ErrorKind::precondition, "mass matrix must have strictly positive finite entries");
  }
  if (!(options.tol > 0.0)) throw Error(ErrorKind::precondition, "tolerance must be positive");

  const VectorXd inv_sqrt_mass = mass.cwiseSqrt().cwiseInverse();
  const SparseMatrix op = reduce(laplacian, inv_sqrt_mass);

  const std::size_t block = std::min(n, count + std::max<std::size_t>(10, count / 4));
  const bool dense = n < options.dense_below || 3 * block > n;

  ReducedSolution sol;
  if (dense) {
    sol = dense_solve(op, count);
  } else {
    const double mass_ratio = mass.maxCoeff() / mass.minCoeff();
    const double tol_reduced = 0.5 * options.tol / std::sqrt(mass_ratio);
    const std::size_t budget = options.max_operator_applications.value_or(
        static_cast<std::size_t>(50.0 * static_cast<double>(count) * std::sqrt(static_cast<double>(n))));
    sol = filtered_subspace_solve(op, count, block, tol_reduced, budget, options.seed);
  }

  SpectralEmbedding emb;
  emb.eigenvalues = sol.values;
  emb.eigenvectors = inv_sqrt_mass.asDiagonal() * sol.vectors;
  fix_signs(emb.eigenvectors);
  emb.dense = dense;
  emb.iterations = sol.iterations;

  const MatrixXd lphi = laplacian * emb.eigenvectors;
  const MatrixXd bphi = mass.asDiagonal() * emb.eigenvectors;
  for (Index j = 0; j < emb.eigenvectors.cols(); ++j) {
    const double r = (lphi.col(j) - emb.eigenvalues(j) * bphi.col(j)).norm() / bphi.col(j).norm();
    emb.max_residual = std::max(emb.max_residual, r);
  }
  if (!dense && emb.max_residual > options.tol) {
    throw Error(ErrorKind::convergence, "eigensolver residual " + std::to_string(emb.max_residual) +
                                            " exceeds tolerance");
  }
  return emb;
}

SpectralEmbedding solve_smallest(const WeightedGraph& graph, std::size_t count, const SolverOptions& options) {
  return solve_smallest(graph.laplacian(), graph.degrees, count, options);
}

MatrixXd eigenmaps(const SpectralEmbedding& emb, std::size_t m) {
  if (m == 0) throw Error(ErrorKind::precondition, "eigenmap dimension must be positive");
  if (emb.count() < m + 1) {
    throw Error(ErrorKind::precondition, "embedding holds " + std::to_string(emb.count()) +
                                             " eigenpairs, need " + std::to_string(m + 1));
  }
  return emb.eigenvectors.middleCols(1, static_cast<Index>(m));
}

FiedlerExtent fiedler_extent(const PointCloud& cloud, const VectorXd& fiedler, std::size_t barycenter_count) {
  const std::size_t n = cloud.size();
  if (static_cast<std::size_t>(fiedler.size()) != n) throw Error(ErrorKind::dimension, "Fiedler vector size mismatch");
  if (barycenter_count == 0 || 2 * barycenter_count > n) {
    throw Error(ErrorKind::precondition, "barycenter_count must lie in [1, n/2]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fiedler(static_cast<Index>(a)) < fiedler(static_cast<Index>(b));
  });
  FiedlerExtent ext;
  for (std::size_t i = 0; i < barycenter_count; ++i) {
    ext.x_min += cloud.points[order[i]];
    ext.x_max += cloud.points[order[n - 1 - i]];
  }
  ext.x_min /= static_cast<double>(barycenter_count);
  ext.x_max /= static_cast<double>(barycenter_count);
  ext.length = (ext.x_max - ext.x_min).norm();
  return ext;
}

FiedlerExtent fiedler_extent(const PointCloud& cloud, const WeightedGraph& graph, std::size_t barycenter_count,
                             const SolverOptions& options) {
  if (graph.n != cloud.size()) throw Error(ErrorKind::dimension, "graph and cloud sizes differ");
  if (graph.components > 1 && !graph.augmented) throw Error(ErrorKind::disconnected, "graph is disconnected");
  const auto emb = solve_smallest(graph, 2, options);
  return fiedler_extent(cloud, VectorXd(emb.eigenvectors.col(1)), barycenter_count);
}

ModalLengths modal_lengths(const PointCloud& cloud, const WeightedGraph& graph, const SpectralEmbedding& emb) {
  if (graph.n != cloud.size() || emb.size() != cloud.size()) {
    throw Error(ErrorKind::dimension, "cloud, graph and embedding sizes differ");
  }
  ModalLengths out;
  out.lengths.assign(emb.count(), std::numeric_limits<double>::infinity());
  std::vector<std::pair<Edge, double>> edges;
  edges.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    const double d = (cloud.points[e.i] - cloud.points[e.j]).norm();
    if (d > 0.0) edges.emplace_back(e, d);
  }
  for (std::size_t k = 1; k < emb.count(); ++k) {
    const auto col = emb.eigenvectors.col(static_cast<Index>(k));
    double grad_sq = 0.0;
    for (const auto& [e, d] : edges) {
      const double g = (col(static_cast<Index>(e.i)) - col(static_cast<Index>(e.j))) / d;
      grad_sq += g * g;
    }
    if (grad_sq > 0.0) {
      out.lengths[k] = col.norm() / std::sqrt(grad_sq);
    } else {
      out.zero_gradient_modes.push_back(k);
    }
  }
  return out;
}

std::string format_embedding_csv(const SpectralEmbedding& emb) {
  std::string out;
  auto row = [&](auto&& values, Index len) {
    for (Index j = 0; j < len; ++j) {
      if (j) out += ',';
      out += text::format_double(values(j), 17);
    }
    out += '\n';
  };
  row(emb.eigenvalues, emb.eigenvalues.size());
  for (Index i = 0; i < emb.eigenvectors.rows(); ++i) row(emb.eigenvectors.row(i), emb.eigenvectors.cols());
  return out;
}

SpectralEmbedding parse_embedding_csv(std::string_view text_in) {
  auto lines = text::split(text_in, '\n');
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorKind::parse, "empty embedding file");
  auto parse_row = [](std::string_view line, std::size_t line_no) {
    std::vector<double> v;
    for (auto f : text::split(text::trim(line), ',')) v.push_back(text::parse_double(f, "line " + std::to_string(line_no + 1)));
    return v;
  };
  const auto values = parse_row(lines[0], 0);
  SpectralEmbedding emb;
  emb.eigenvalues = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
  emb.eigenvectors.resize(static_cast<Index>(lines.size() - 1), static_cast<Index>(values.size()));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto row = parse_row(lines[i], i);
    if (row.size() != values.size()) throw Error(ErrorKind::parse, "ragged embedding row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < row.size(); ++j) emb.eigenvectors(static_cast<Index>(i - 1), static_cast<Index>(j)) = row[j];
  }
  return emb;
}

}  // namespace specmatch
