#include "specmatch/coupling.hpp"

#include <algorithm>
#include <cmath>

#include "specmatch/error.hpp"
#include "specmatch/kdtree.hpp"
#include "specmatch/random.hpp"
#include "specmatch/text_io.hpp"

namespace specmatch {

namespace {

using Eigen::Index;
using Triplet = Eigen::Triplet<double>;

void add_edge(std::vector<Triplet>& trip, std::size_t i, std::size_t j, double w) {
  const auto a = static_cast<int>(i);
  const auto b = static_cast<int>(j);
  trip.emplace_back(a, b, -w);
  trip.emplace_back(b, a, -w);
  trip.emplace_back(a, a, w);
  trip.emplace_back(b, b, w);
}

}  // namespace

std::size_t coupling_count(double fraction, std::size_t target_size) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(target_size)));
}

CouplingPlan plan_coupling(const PointCloud& target, std::span<const PointCloud> sources, double fraction,
                           std::uint64_t seed, double alpha) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorKind::precondition, "coupling fraction must lie in (0, 1]");
  if (!(alpha > 0.0)) throw Error(ErrorKind::precondition, "alpha must be positive");
  validate(target);
  if (sources.empty()) throw Error(ErrorKind::empty, "no source shapes to couple");
  for (const auto& s : sources) {
    if (s.empty()) throw Error(ErrorKind::empty, "source shape '" + s.name + "' is empty");
  }
  const auto count = coupling_count(fraction, target.size());
  if (count == 0) throw Error(ErrorKind::precondition, "coupling fraction selects no target vertex");

  CouplingPlan plan;
  plan.fraction = fraction;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.target_subset = sample_without_replacement(target.size(), count, seed);
  for (const auto& source : sources) {
    KdTree tree(source.points);
    std::vector<std::size_t> matches;
    matches.reserve(count);
    for (auto t : plan.target_subset) matches.push_back(tree.nearest(target.points[t]).index);
    plan.source_matches.push_back(std::move(matches));
  }
  return plan;
}

std::string format_plan_csv(const CouplingPlan& plan) {
  std::string out = "l,alpha,seed\n";
  out += text::format_double(plan.fraction, 17) + "," + text::format_double(plan.alpha, 17) + "," +
         std::to_string(plan.seed) + "\ntarget_index,source_id,source_index\n";
  for (std::size_t s = 0; s < plan.source_count(); ++s) {
    for (std::size_t j = 0; j < plan.pair_count(); ++j) {
      out += std::to_string(plan.target_subset[j]) + "," + std::to_string(s) + "," +
             std::to_string(plan.source_matches[s][j]) + "\n";
    }
  }
  return out;
}

CouplingPlan parse_plan_csv(std::string_view text_in) {
  auto lines = text::split(text_in, '\n');
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < 3 || text::trim(lines[0]) != "l,alpha,seed" ||
      text::trim(lines[2]) != "target_index,source_id,source_index") {
    throw Error(ErrorKind::parse, "coupling plan: missing header rows");
  }
  CouplingPlan plan;
  auto head = text::split(text::trim(lines[1]), ',');
  if (head.size() != 3) throw Error(ErrorKind::parse, "coupling plan: malformed parameter row");
  plan.fraction = text::parse_double(head[0], "plan l");
  plan.alpha = text::parse_double(head[1], "plan alpha");
  plan.seed = static_cast<std::uint64_t>(text::parse_int(head[2], "plan seed"));

  // triples are grouped per source; target indices must agree across sources
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> per_source;
  for (std::size_t n = 3; n < lines.size(); ++n) {
    if (text::trim(lines[n]).empty()) continue;
    auto f = text::split(text::trim(lines[n]), ',');
    const auto ctx = "plan line " + std::to_string(n + 1);
    if (f.size() != 3) throw Error(ErrorKind::parse, ctx + ": expected 3 fields");
    const auto t = text::parse_int(f[0], ctx), s = text::parse_int(f[1], ctx), v = text::parse_int(f[2], ctx);
    if (t < 0 || s < 0 || v < 0) throw Error(ErrorKind::parse, ctx + ": negative index");
    if (static_cast<std::size_t>(s) >= per_source.size()) per_source.resize(static_cast<std::size_t>(s) + 1);
    per_source[static_cast<std::size_t>(s)].emplace_back(static_cast<std::size_t>(t), static_cast<std::size_t>(v));
  }
  if (per_source.empty()) throw Error(ErrorKind::parse, "coupling plan has no pairs");
  for (const auto& [t, v] : per_source[0]) plan.target_subset.push_back(t);
  for (const auto& pairs : per_source) {
    if (pairs.size() != plan.target_subset.size()) throw Error(ErrorKind::parse, "sources have different pair counts");
    std::vector<std::size_t> matches;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (pairs[j].first != plan.target_subset[j]) {
        throw Error(ErrorKind::parse, "target indices differ between sources");
      }
      matches.push_back(pairs[j].second);
    }
    plan.source_matches.push_back(std::move(matches));
  }
  return plan;
}

SigmaMode parse_sigma_mode(std::string_view name) {
  if (name == "global") return SigmaMode::global;
  if (name == "per-shape" || name == "per_shape") return SigmaMode::per_shape;
  throw Error(ErrorKind::parse, "unknown sigma mode '" + std::string(name) + "'");
}

std::string_view to_string(SigmaMode mode) { return mode == SigmaMode::global ? "global" : "per-shape"; }

CoupledSystem coupled_laplacian(const WeightedGraph& target_graph, std::span<const WeightedGraph> source_graphs,
                                const PointCloud& target, std::span<const PointCloud> sources,
                                const CouplingPlan& plan, SigmaMode sigma_mode) {
  if (source_graphs.size() != sources.size()) throw Error(ErrorKind::dimension, "one graph per source is required");
  if (plan.source_count() != sources.size()) throw Error(ErrorKind::dimension, "plan and sources disagree on N");
  if (target_graph.n != target.size()) throw Error(ErrorKind::dimension, "target graph/cloud size mismatch");
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (source_graphs[s].n != sources[s].size()) throw Error(ErrorKind::dimension, "source graph/cloud size mismatch");
    if (plan.source_matches[s].size() != plan.pair_count()) throw Error(ErrorKind::dimension, "ragged coupling plan");
    for (auto v : plan.source_matches[s]) {
      if (v >= sources[s].size()) throw Error(ErrorKind::dimension, "plan references a missing source vertex");
    }
  }
  for (auto t : plan.target_subset) {
    if (t >= target.size()) throw Error(ErrorKind::dimension, "plan references a missing target vertex");
  }
  if (!(plan.alpha > 0.0)) throw Error(ErrorKind::precondition, "alpha must be positive");

  CoupledSystem sys;
  sys.alpha = plan.alpha;
  sys.offsets.push_back(0);
  sys.offsets.push_back(target.size());
  for (const auto& s : sources) sys.offsets.push_back(sys.offsets.back() + s.size());
  const auto n = static_cast<Index>(sys.offsets.back());

  // squared lengths of every cross pair
  std::vector<std::vector<double>> cross_d2(sources.size());
  double max_cross = 0.0;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t j = 0; j < plan.pair_count(); ++j) {
      const double d2 = (target.points[plan.target_subset[j]] - sources[s].points[plan.source_matches[s][j]]).squaredNorm();
      if (!std::isfinite(d2)) throw Error(ErrorKind::precondition, "non-finite cross-pair distance");
      cross_d2[s].push_back(d2);
      max_cross = std::max(max_cross, d2);
    }
  }

  std::vector<const WeightedGraph*> graphs{&target_graph};
  for (const auto& g : source_graphs) graphs.push_back(&g);

  std::vector<WeightedGraph> shaped;
  double cross_sigma_sq = target_graph.sigma_sq;
  if (sigma_mode == SigmaMode::global) {
    double sigma_sq = max_cross;
    for (const auto* g : graphs) {
      for (const auto& e : g->edges) sigma_sq = std::max(sigma_sq, e.dist_sq);
    }
    if (!(sigma_sq > 0.0)) throw Error(ErrorKind::degenerate, "all coupled edge lengths are zero");
    for (const auto* g : graphs) shaped.push_back(g->reweighted(sigma_sq));
    cross_sigma_sq = sigma_sq;
    sys.sigma_sq = sigma_sq;
  } else {
    for (const auto* g : graphs) shaped.push_back(*g);
    sys.sigma_sq = target_graph.sigma_sq;
  }

  std::vector<Triplet> intra;
  sys.mass.resize(n);
  for (std::size_t s = 0; s < shaped.size(); ++s) {
    const auto off = sys.offsets[s];
    for (const auto& e : shaped[s].edges) add_edge(intra, off + e.i, off + e.j, e.weight);
    sys.mass.segment(static_cast<Index>(off), static_cast<Index>(shaped[s].n)) = shaped[s].degrees;
  }
  std::vector<Triplet> cross;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto off = sys.offsets[s + 1];
    for (std::size_t j = 0; j < plan.pair_count(); ++j) {
      add_edge(cross, plan.target_subset[j], off + plan.source_matches[s][j], std::exp(-cross_d2[s][j] / cross_sigma_sq));
    }
  }
  sys.uncoupled.resize(n, n);
  sys.uncoupled.setFromTriplets(intra.begin(), intra.end());
  sys.cross.resize(n, n);
  sys.cross.setFromTriplets(cross.begin(), cross.end());
  sys.laplacian = sys.uncoupled + plan.alpha * sys.cross;
  sys.laplacian.makeCompressed();
  return sys;
}

Eigen::MatrixXd CoupledEmbedding::slice(std::size_t s) const {
  const auto rows = static_cast<Index>(offsets.at(s + 1) - offsets.at(s));
  return global.eigenvectors.block(static_cast<Index>(offsets[s]), 1, rows, static_cast<Index>(m));
}

Eigen::MatrixXd CoupledEmbedding::full_slice(std::size_t s) const {
  const auto rows = static_cast<Index>(offsets.at(s + 1) - offsets.at(s));
  return global.eigenvectors.middleRows(static_cast<Index>(offsets[s]), rows);
}

CoupledEmbedding coupled_eigenmaps(const CoupledSystem& system, std::size_t m, const SolverOptions& options) {
  if (m == 0) throw Error(ErrorKind::precondition, "eigenmap dimension must be positive");
  CoupledEmbedding out;
  out.global = solve_smallest(system.laplacian, system.mass, m + 1, options);
  out.offsets = system.offsets;
  out.m = m;
  return out;
}

}  // namespace specmatch
