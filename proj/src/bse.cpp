#include "specmatch/bse.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "specmatch/error.hpp"
#include "specmatch/matching.hpp"
#include "specmatch/random.hpp"
#include "specmatch/text_io.hpp"

#include <json.hpp>

namespace specmatch {

namespace {

using Eigen::Vector3d;

double normal(std::mt19937_64& rng) { return standard_normal(rng); }

PointCloud perturb(const PointCloud& cloud, double diam, const PosePerturbation& p, std::mt19937_64& rng) {
  Vector3d axis(normal(rng), normal(rng), normal(rng));
  if (axis.norm() == 0.0) axis = Vector3d::UnitZ();
  const double angle = normal(rng) * p.rotation_sd_deg * std::numbers::pi / 180.0;
  const Vector3d shift(normal(rng), normal(rng), normal(rng));
  const Eigen::Matrix3d r = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  const Vector3d c = centroid(cloud.points);
  PointCloud out = cloud;
  for (auto& q : out.points) q = r * (q - c) + c + p.translation_sd_frac * diam * shift;
  return out;
}

WeightedGraph graph_for(const PointCloud& cloud, const BseParams& params) {
  GraphOptions g;
  g.k = params.k;
  g.auto_connect = params.auto_connect;
  return build_graph(cloud, g);
}

// Graph of the cloud scaled by c: same topology, lengths scaled.
WeightedGraph scaled_graph(const WeightedGraph& g, double c) {
  WeightedGraph out = g;
  for (auto& e : out.edges) e.dist_sq *= c * c;
  return out.reweighted(g.sigma_sq * c * c);
}

}  // namespace

Side parse_side(std::string_view name) {
  const auto t = text::trim(name);
  if (t == "left" || t == "L" || t == "l") return Side::left;
  if (t == "right" || t == "R" || t == "r") return Side::right;
  throw Error(ErrorKind::parse, "side must be 'left' or 'right', got '" + std::string(t) + "'");
}

std::string_view to_string(Side side) { return side == Side::left ? "left" : "right"; }

Side opposite(Side side) { return side == Side::left ? Side::right : Side::left; }

PointCloud mirror_pca(const PointCloud& cloud) {
  validate(cloud);
  const auto frame = pca_frame(cloud.points);
  if (!(frame.variances(2) > 1e-12 * frame.variances(0))) {
    throw Error(ErrorKind::degenerate, "cannot mirror a cloud with degenerate covariance");
  }
  const Vector3d axis = frame.axes.col(1);
  PointCloud out = cloud;
  for (auto& p : out.points) p -= 2.0 * axis.dot(p - frame.centroid) * axis;
  return out;
}

SidePrediction estimate_side(const PointCloud& source, Side source_side, const PointCloud& target,
                             const BseParams& params) {
  validate(source);
  validate(target);
  SidePrediction pred;
  pred.params = params;
  pred.source_side = source_side;

  // the reference is coupled unchanged; the two candidates are the other
  // shape and its mirror image, both scaled and registered onto the reference
  const WeightedGraph source_graph = graph_for(source, params);
  const WeightedGraph target_graph = graph_for(target, params);
  pred.scale_factor =
      spectral_scale_factor(source, source_graph, target, target_graph, params.barycenter_count, params.solver);

  PointCloud reference;
  WeightedGraph reference_graph;
  PointCloud candidate;
  WeightedGraph candidate_graph;
  if (!params.mirror_target) {
    reference = target;
    for (auto& p : reference.points) p *= pred.scale_factor;
    reference_graph = scaled_graph(target_graph, pred.scale_factor);
    candidate = source;
    candidate_graph = source_graph;
  } else {
    reference = source;
    reference_graph = source_graph;
    candidate = target;
    for (auto& p : candidate.points) p *= pred.scale_factor;
    candidate_graph = scaled_graph(target_graph, pred.scale_factor);
  }
  const PointCloud mirrored = mirror_pca(candidate);

  // a reflection and a rigid motion keep every edge length, so both
  // registered candidates share the candidate's graph
  auto align = [&](const PointCloud& moving) {
    return params.pre_registered ? pass_through(moving, reference) : register_rigid(moving, reference, params.icp);
  };
  auto same = align(candidate);
  auto mirror = align(mirrored);
  const double ref_diam = diameter(reference.points);
  pred.rms_same = same.rms;
  pred.rms_mirror = mirror.rms;
  pred.registration_failed = std::min(same.rms, mirror.rms) > params.failure_rms_fraction * ref_diam;

  if (params.perturbation) {
    std::mt19937_64 rng(params.perturbation->seed);
    same.aligned = perturb(same.aligned, ref_diam, *params.perturbation, rng);
    mirror.aligned = perturb(mirror.aligned, ref_diam, *params.perturbation, rng);
  }

  const std::vector<PointCloud> sources{same.aligned, mirror.aligned};
  const std::vector<WeightedGraph> graphs{candidate_graph, candidate_graph};
  const auto plan = plan_coupling(reference, sources, params.l, params.seed, params.alpha);
  const auto system = coupled_laplacian(reference_graph, graphs, reference, sources, plan, params.sigma_mode);
  const auto coupled = coupled_eigenmaps(system, params.m, params.solver);
  MatchMeta meta{params.m, params.l, params.k, params.alpha, params.seed};
  const auto report = global_match(coupled, plan, meta);

  pred.d_same = report.distances[0];
  pred.d_mirror = report.distances[1];
  pred.margin = pred.d_mirror - pred.d_same;
  pred.rank_deficient = report.rank_deficient[0] || report.rank_deficient[1];
  pred.side = pred.d_same <= pred.d_mirror ? source_side : opposite(source_side);
  return pred;
}

std::string format_prediction_json(const SidePrediction& p) {
  nlohmann::ordered_json j;
  j["side"] = to_string(p.side);
  j["source_side"] = to_string(p.source_side);
  j["d_same"] = p.d_same;
  j["d_mirror"] = p.d_mirror;
  j["margin"] = p.margin;
  j["scale_factor"] = p.scale_factor;
  j["rms_same"] = p.rms_same;
  j["rms_mirror"] = p.rms_mirror;
  j["registration_failed"] = p.registration_failed;
  j["rank_deficient"] = p.rank_deficient;
  return j.dump(2);
}

std::vector<LabeledCloud> load_bse_manifest(const std::string& manifest_path) {
  const auto text = text::read_file(manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<LabeledCloud> out;
  std::size_t line_no = 0;
  for (auto line : text::split(text, '\n')) {
    ++line_no;
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split(line, ',');
    if (fields.size() != 2) {
      throw Error(ErrorKind::parse, "manifest line " + std::to_string(line_no) + ": expected 'path,side'");
    }
    const auto path_field = text::trim(fields[0]);
    const auto side_field = text::trim(fields[1]);
    if (line_no == 1 && path_field == "path" && side_field == "side") continue;
    std::filesystem::path p{std::string(path_field)};
    if (p.is_relative()) p = base / p;
    LabeledCloud entry;
    entry.name = std::string(path_field);
    entry.side = parse_side(side_field);
    entry.cloud = load_cloud(p.string(), format_from_extension(p.string()));
    out.push_back(std::move(entry));
  }
  return out;
}

BseBenchmark bse_benchmark(const std::vector<LabeledCloud>& dataset, const BseParams& params) {
  if (dataset.size() < 2) throw Error(ErrorKind::empty, "benchmark needs at least two shapes (empty target set)");
  BseBenchmark bench;
  double sum = 0.0;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    BseBenchmarkRow row;
    row.source = dataset[s].name;
    for (std::size_t t = 0; t < dataset.size(); ++t) {
      if (t == s) continue;
      auto pred = estimate_side(dataset[s].cloud, dataset[s].side, dataset[t].cloud, params);
      ++row.targets;
      if (pred.side == dataset[t].side) ++row.correct;
      bench.pairs.emplace_back(dataset[s].name, dataset[t].name);
      bench.predictions.push_back(std::move(pred));
    }
    row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.targets);
    sum += row.accuracy;
    bench.rows.push_back(row);
  }
  bench.mean_accuracy = sum / static_cast<double>(bench.rows.size());
  return bench;
}

std::string format_benchmark_csv(const BseBenchmark& bench) {
  std::string out = "source,targets,correct,accuracy\n";
  std::size_t targets = 0, correct = 0;
  for (const auto& r : bench.rows) {
    out += r.source + "," + std::to_string(r.targets) + "," + std::to_string(r.correct) + "," +
           text::format_double(r.accuracy, 17) + "\n";
    targets += r.targets;
    correct += r.correct;
  }
  out += "mean," + std::to_string(targets) + "," + std::to_string(correct) + "," +
         text::format_double(bench.mean_accuracy, 17) + "\n";
  return out;
}

}  // namespace specmatch
