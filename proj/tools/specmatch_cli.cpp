// specmatch: command-line front end.
//
// Every command writes its outputs into --out with fixed file names and
// prints the main JSON document to stdout. Failures print
// {"error": {"kind": ..., "message": ...}} and exit with
//   2 bad input, 3 numerical failure, 4 precondition violation.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "specmatch/anomaly.hpp"
#include "specmatch/bse.hpp"
#include "specmatch/coupling.hpp"
#include "specmatch/eigensolve.hpp"
#include "specmatch/error.hpp"
#include "specmatch/graph.hpp"
#include "specmatch/matching.hpp"
#include "specmatch/pointcloud.hpp"
#include "specmatch/registration.hpp"
#include "specmatch/text_io.hpp"
#include "specmatch/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace specmatch;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse:
    case ErrorKind::empty:
    case ErrorKind::dimension:
    case ErrorKind::io: return 2;
    case ErrorKind::degenerate:
    case ErrorKind::convergence: return 3;
    case ErrorKind::disconnected:
    case ErrorKind::precondition: return 4;
  }
  return 2;
}

int report_error(std::string_view kind, std::string_view message, int code) {
  json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cout << j.dump(2) << "\n";
  return code;
}

struct Common {
  std::string out = ".";
  std::string format;  // empty: from extension
};

PointCloud load(const std::string& path, const std::string& format) {
  return load_cloud(path, format.empty() ? format_from_extension(path) : parse_cloud_format(format));
}

void emit(const Common& c, const std::string& name, std::string_view contents) {
  fs::create_directories(c.out);
  text::write_file((fs::path(c.out) / name).string(), contents);
}

json envelope(std::string_view command, json config) {
  json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["config"] = std::move(config);
  return j;
}

void finish(const Common& c, const std::string& name, const json& j) {
  const auto doc = j.dump(2) + "\n";
  emit(c, name, doc);
  std::cout << doc;
}

// ---------------------------------------------------------------------------

struct EigenmapsArgs {
  std::string cloud;
  std::size_t k = 10;
  std::size_t m = 20;
  std::optional<double> sigma_sq;
  bool auto_connect = false;
  double tol = 1e-8;
};

int run_eigenmaps(const Common& c, const EigenmapsArgs& a) {
  const auto cloud = load(a.cloud, c.format);
  GraphOptions g{a.k, a.sigma_sq, a.auto_connect};
  const auto graph = build_graph(cloud, g);
  SolverOptions opts;
  opts.tol = a.tol;
  const auto emb = solve_smallest(graph, a.m + 1, opts);
  const auto modal = modal_lengths(cloud, graph, emb);

  emit(c, "embedding.csv", format_embedding_csv(emb));
  std::string modal_csv = "mode,eigenvalue,modal_length\n";
  for (std::size_t i = 0; i < modal.lengths.size(); ++i) {
    modal_csv += std::to_string(i) + "," + text::format_double(emb.eigenvalues(static_cast<Eigen::Index>(i)), 17) +
                 "," + text::format_double(modal.lengths[i], 17) + "\n";
  }
  emit(c, "modal_lengths.csv", modal_csv);
  emit(c, "graph.csv", format_graph_csv(graph));

  json config{{"cloud", a.cloud}, {"format", c.format}, {"k", a.k}, {"m", a.m}, {"auto_connect", a.auto_connect},
              {"tol", a.tol}};
  config["sigma_sq"] = a.sigma_sq ? json(*a.sigma_sq) : json(nullptr);
  auto j = envelope("eigenmaps", std::move(config));
  j["result"] = {{"points", cloud.size()},
                 {"edges", graph.edges.size()},
                 {"sigma_sq", graph.sigma_sq},
                 {"augmented", graph.augmented},
                 {"eigenvalues", std::vector<double>(emb.eigenvalues.data(), emb.eigenvalues.data() + emb.count())},
                 {"max_residual", emb.max_residual},
                 {"dense", emb.dense}};
  finish(c, "eigenmaps.json", j);
  return 0;
}

// ---------------------------------------------------------------------------

struct MatchArgs {
  std::string target;
  std::vector<std::string> sources;
  std::size_t k = 10;
  std::size_t m = 20;
  double l = 0.5;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::string plan_file;
  std::string sigma_mode = "global";
  bool register_sources = false;
  std::optional<std::size_t> pointwise;
  bool auto_connect = false;
};

int run_match(const Common& c, const MatchArgs& a) {
  const auto target = load(a.target, c.format);
  std::vector<PointCloud> sources;
  std::vector<double> rms;
  for (const auto& path : a.sources) {
    auto s = load(path, c.format);
    if (a.register_sources) {
      auto reg = register_rigid(s, target);
      rms.push_back(reg.rms);
      s = std::move(reg.aligned);
    }
    sources.push_back(std::move(s));
  }
  GraphOptions g;
  g.k = a.k;
  g.auto_connect = a.auto_connect;
  const auto target_graph = build_graph(target, g);
  std::vector<WeightedGraph> graphs;
  for (const auto& s : sources) graphs.push_back(build_graph(s, g));

  CouplingPlan plan;
  if (!a.plan_file.empty()) {
    plan = parse_plan_csv(text::read_file(a.plan_file));
  } else {
    plan = plan_coupling(target, sources, a.l, a.seed, a.alpha);
  }
  const auto mode = parse_sigma_mode(a.sigma_mode);
  const auto system = coupled_laplacian(target_graph, graphs, target, sources, plan, mode);
  const auto coupled = coupled_eigenmaps(system, a.m);
  const MatchMeta meta{a.m, plan.fraction, a.k, plan.alpha, plan.seed};
  emit(c, "plan.csv", format_plan_csv(plan));

  json config{{"target", a.target},       {"sources", a.sources},      {"format", c.format},
              {"k", a.k},                 {"m", a.m},                  {"l", plan.fraction},
              {"alpha", plan.alpha},      {"seed", plan.seed},         {"plan_file", a.plan_file},
              {"sigma_mode", a.sigma_mode}, {"register", a.register_sources}, {"auto_connect", a.auto_connect}};
  config["pointwise"] = a.pointwise ? json(*a.pointwise) : json(nullptr);
  auto j = envelope("match", std::move(config));

  const auto report = global_match(coupled, plan, meta);
  json result{{"mode", "global"},
              {"distances", report.distances},
              {"rank_deficient", report.rank_deficient},
              {"best", report.best},
              {"best_source", a.sources[report.best]},
              {"pairs", plan.pair_count()},
              {"sigma_sq", system.sigma_sq}};
  if (!rms.empty()) result["registration_rms"] = rms;
  if (a.pointwise) {
    const auto pw = pointwise_scores(coupled, plan, *a.pointwise, meta);
    std::string csv = "target_index,score\n";
    for (const auto& p : pw.per_point) csv += std::to_string(p.target_index) + "," + text::format_double(p.score, 17) + "\n";
    emit(c, "pointwise.csv", csv);
    result["zero_norm_rows"] = pw.zero_norm_rows;
  }
  j["result"] = std::move(result);
  finish(c, "match.json", j);
  return 0;
}

// ---------------------------------------------------------------------------

struct BseArgs {
  std::string source;
  std::string side;
  std::string target;
  std::string manifest;
  BseParams params;
  std::string sigma_mode = "global";
  double rotation_sd_deg = 0.0;
  double translation_sd_frac = 0.0;
};

json bse_config(const BseArgs& a, const Common& c) {
  const auto& p = a.params;
  return json{{"format", c.format},
              {"k", p.k},
              {"m", p.m},
              {"l", p.l},
              {"alpha", p.alpha},
              {"seed", p.seed},
              {"barycenters", p.barycenter_count},
              {"sigma_mode", a.sigma_mode},
              {"mirror_target", p.mirror_target},
              {"auto_connect", p.auto_connect},
              {"pre_registered", p.pre_registered},
              {"trim", p.icp.trim_fraction},
              {"max_icp_iters", p.icp.max_iters},
              {"failure_rms_fraction", p.failure_rms_fraction},
              {"perturb_rotation_sd_deg", a.rotation_sd_deg},
              {"perturb_translation_sd_frac", a.translation_sd_frac}};
}

BseParams finalize(const BseArgs& a) {
  BseParams p = a.params;
  p.sigma_mode = parse_sigma_mode(a.sigma_mode);
  if (a.rotation_sd_deg > 0.0 || a.translation_sd_frac > 0.0) {
    p.perturbation = PosePerturbation{a.rotation_sd_deg, a.translation_sd_frac, p.seed + 1};
  }
  return p;
}

int run_bse(const Common& c, const BseArgs& a) {
  const auto source = load(a.source, c.format);
  const auto target = load(a.target, c.format);
  const auto pred = estimate_side(source, parse_side(a.side), target, finalize(a));
  auto config = bse_config(a, c);
  config["source"] = a.source;
  config["side"] = a.side;
  config["target"] = a.target;
  auto j = envelope("bse", std::move(config));
  j["result"] = json::parse(format_prediction_json(pred));
  finish(c, "bse.json", j);
  return 0;
}

int run_bse_bench(const Common& c, const BseArgs& a) {
  const auto dataset = load_bse_manifest(a.manifest);
  const auto bench = bse_benchmark(dataset, finalize(a));
  emit(c, "bse_bench.csv", format_benchmark_csv(bench));
  auto config = bse_config(a, c);
  config["manifest"] = a.manifest;
  auto j = envelope("bse-bench", std::move(config));
  json preds = json::array();
  for (std::size_t i = 0; i < bench.predictions.size(); ++i) {
    auto p = json::parse(format_prediction_json(bench.predictions[i]));
    json entry{{"source", bench.pairs[i].first}, {"target", bench.pairs[i].second}};
    for (auto& [key, value] : p.items()) entry[key] = value;
    preds.push_back(std::move(entry));
  }
  j["result"] = {{"mean_accuracy", bench.mean_accuracy}, {"predictions", std::move(preds)}};
  finish(c, "bse_bench.json", j);
  return 0;
}

// ---------------------------------------------------------------------------

struct AnomalyArgs {
  std::string source;
  std::string target;
  std::string gt;
  AnomalyParams params;
  std::optional<double> score_scale;
  std::string sigma_mode = "global";
  double fpr_limit = 0.3;
};

int run_anomaly(const Common& c, const AnomalyArgs& a) {
  const auto source = load(a.source, c.format);
  const auto target = load(a.target, c.format);
  AnomalyParams p = a.params;
  p.sigma_mode = parse_sigma_mode(a.sigma_mode);
  if (a.score_scale) {
    p.normalization = ScoreNormalization::fixed;
    p.score_scale = *a.score_scale;
  }
  std::optional<GroundTruth> gt;
  std::size_t h = 0, w = 0;
  if (!a.gt.empty()) {
    gt = load_mask(a.gt);
    h = gt->height;
    w = gt->width;
  } else {
    std::tie(h, w) = grid_extent(target);
  }
  const auto result = anomaly_pipeline(source, target, h, w, p);
  emit(c, "anomaly_map.csv", format_map_csv(result.map));
  emit(c, "anomaly_map.pgm", format_map_pgm(result.map));

  json config{{"source", a.source},
              {"target", a.target},
              {"gt", a.gt},
              {"format", c.format},
              {"k", p.k},
              {"m", p.m},
              {"l", p.l},
              {"alpha", p.alpha},
              {"seed", p.seed},
              {"z_quantile", p.z_quantile},
              {"max_points", p.max_points},
              {"anisotropic", p.anisotropic},
              {"pre_registered", p.pre_registered},
              {"sigma_mode", a.sigma_mode},
              {"normalization", p.normalization == ScoreNormalization::fixed ? "fixed" : "min-max"},
              {"score_scale", p.score_scale},
              {"fpr_limit", a.fpr_limit}};
  auto j = envelope("anomaly", std::move(config));
  json result_j{{"height", h},
                {"width", w},
                {"points", result.target.size()},
                {"kept_fraction", result.map.kept_fraction},
                {"registration_rms", result.registration_rms},
                {"zero_norm_rows", result.zero_norm_rows}};
  if (gt) {
    result_j["pro_auc"] = pro_auc(result.map, *gt, a.fpr_limit);
    result_j["baseline_pro_auc"] = pro_auc(result.baseline, *gt, a.fpr_limit);
  }
  j["result"] = std::move(result_j);
  finish(c, "anomaly.json", j);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string map;
  std::string gt;
  std::string manifest;
  double fpr_limit = 0.3;
};

int run_eval(const Common& c, const EvalArgs& a) {
  json config{{"map", a.map}, {"gt", a.gt}, {"manifest", a.manifest}, {"fpr_limit", a.fpr_limit}};
  auto j = envelope("eval-pro", std::move(config));
  if (!a.manifest.empty()) {
    // rows "category,map,gt"; one pooled AUC per category
    const auto base = fs::path(a.manifest).parent_path();
    std::map<std::string, std::pair<std::vector<ScoreMap>, std::vector<GroundTruth>>> groups;
    std::size_t line_no = 0;
    const auto manifest = text::read_file(a.manifest);
    for (auto line : text::split(manifest, '\n')) {
      ++line_no;
      line = text::trim(line);
      if (line.empty() || line.front() == '#') continue;
      const auto f = text::split(line, ',');
      if (f.size() != 3) throw Error(ErrorKind::parse, "manifest line " + std::to_string(line_no) + ": expected 'category,map,gt'");
      if (line_no == 1 && text::trim(f[0]) == "category") continue;
      auto resolve = [&](std::string_view s) {
        fs::path p{std::string(text::trim(s))};
        return (p.is_relative() ? base / p : p).string();
      };
      auto& g = groups[std::string(text::trim(f[0]))];
      g.first.push_back(load_map(resolve(f[1])));
      g.second.push_back(load_mask(resolve(f[2])));
    }
    if (groups.empty()) throw Error(ErrorKind::empty, "manifest lists no images");
    std::string csv = "category,images,pro_auc\n";
    json cats = json::object();
    double sum = 0.0;
    for (const auto& [name, g] : groups) {
      const double auc = pro_auc_pooled(g.first, g.second, a.fpr_limit);
      csv += name + "," + std::to_string(g.first.size()) + "," + text::format_double(auc, 17) + "\n";
      cats[name] = auc;
      sum += auc;
    }
    const double mean = sum / static_cast<double>(groups.size());
    csv += "mean,," + text::format_double(mean, 17) + "\n";
    emit(c, "pro_report.csv", csv);
    j["result"] = {{"categories", std::move(cats)}, {"mean", mean}};
  } else {
    if (a.map.empty() || a.gt.empty()) throw Error(ErrorKind::precondition, "eval-pro needs --map and --gt, or --manifest");
    const auto map = load_map(a.map);
    const auto gt = load_mask(a.gt);
    j["result"] = {{"pro_auc", pro_auc(map, gt, a.fpr_limit)}, {"regions", gt.regions.size()}};
  }
  finish(c, "eval_pro.json", j);
  return 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--format", c.format, "Cloud format: ply, xyz, grid (default: from extension)");
}

void add_bse_options(CLI::App* app, BseArgs& a) {
  auto& p = a.params;
  app->add_option("--k", p.k, "Neighbours per vertex")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--m", p.m, "Eigenmaps compared")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--l", p.l, "Fraction of target vertices cross-connected")->capture_default_str();
  app->add_option("--alpha", p.alpha, "Cross-connection penalization")->capture_default_str();
  app->add_option("--seed", p.seed, "Random seed")->required();
  app->add_option("--barycenters", p.barycenter_count, "Points averaged at each Fiedler extreme")->capture_default_str();
  app->add_option("--sigma-mode", a.sigma_mode, "global or per-shape")->capture_default_str();
  app->add_flag("--mirror-target", p.mirror_target, "Mirror the target instead of the source");
  app->add_flag("--auto-connect", p.auto_connect, "Bridge disconnected kNN graphs");
  app->add_flag("--pre-registered", p.pre_registered, "Inputs already share a frame; skip PCA + ICP");
  app->add_option("--trim", p.icp.trim_fraction, "ICP trim fraction")->capture_default_str();
  app->add_option("--perturb-rotation-sd", a.rotation_sd_deg, "Post-ICP rotation noise SD in degrees");
  app->add_option("--perturb-translation-sd", a.translation_sd_frac, "Post-ICP translation noise SD (fraction of diameter)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled Laplacian eigenmaps for point-cloud matching"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;

  EigenmapsArgs eig;
  auto* c_eig = app.add_subcommand("eigenmaps", "Laplacian eigenmaps and modal lengths of one cloud");
  add_common(c_eig, common);
  c_eig->add_option("--cloud", eig.cloud, "Input cloud")->required();
  c_eig->add_option("--k", eig.k, "Neighbours per vertex")->capture_default_str()->check(CLI::PositiveNumber);
  c_eig->add_option("--m", eig.m, "Eigenmaps (phi_1..phi_m)")->capture_default_str()->check(CLI::PositiveNumber);
  c_eig->add_option("--sigma-sq", eig.sigma_sq, "RBF width (default: largest squared edge)");
  c_eig->add_flag("--auto-connect", eig.auto_connect, "Bridge disconnected kNN graphs");
  c_eig->add_option("--tol", eig.tol, "Eigensolver residual tolerance")->capture_default_str();

  MatchArgs mat;
  std::size_t pointwise = 0;
  auto* c_mat = app.add_subcommand("match", "Grassmann comparison of a target with registered sources");
  add_common(c_mat, common);
  c_mat->add_option("--target", mat.target, "Target cloud")->required();
  c_mat->add_option("--source", mat.sources, "Source cloud (repeatable)")->required();
  c_mat->add_option("--k", mat.k, "Neighbours per vertex")->capture_default_str()->check(CLI::PositiveNumber);
  c_mat->add_option("--m", mat.m, "Eigenmaps compared")->capture_default_str()->check(CLI::PositiveNumber);
  c_mat->add_option("--l", mat.l, "Fraction of target vertices cross-connected")->capture_default_str();
  c_mat->add_option("--alpha", mat.alpha, "Cross-connection penalization")->capture_default_str();
  c_mat->add_option("--seed", mat.seed, "Random seed")->required();
  c_mat->add_option("--plan-file", mat.plan_file, "Use this coupling plan instead of sampling one");
  c_mat->add_option("--sigma-mode", mat.sigma_mode, "global or per-shape")->capture_default_str();
  c_mat->add_flag("--register", mat.register_sources, "Register each source to the target (PCA + ICP) first");
  auto* pw_opt = c_mat->add_option("--pointwise", pointwise, "Also write per-point scores against this source index");
  c_mat->add_flag("--auto-connect", mat.auto_connect, "Bridge disconnected kNN graphs");

  BseArgs bse;
  auto* c_bse = app.add_subcommand("bse", "Estimate the side of a target from a labelled source");
  add_common(c_bse, common);
  c_bse->add_option("--source", bse.source, "Source cloud")->required();
  c_bse->add_option("--side", bse.side, "Side of the source: left or right")->required();
  c_bse->add_option("--target", bse.target, "Target cloud")->required();
  add_bse_options(c_bse, bse);

  BseArgs bench;
  auto* c_bench = app.add_subcommand("bse-bench", "Cross-test every shape of a labelled dataset");
  add_common(c_bench, common);
  c_bench->add_option("--manifest", bench.manifest, "CSV with path,side rows")->required();
  add_bse_options(c_bench, bench);

  AnomalyArgs ano;
  auto* c_ano = app.add_subcommand("anomaly", "Anomaly map of an organized target scene against a source");
  add_common(c_ano, common);
  auto& ap = ano.params;
  c_ano->add_option("--source", ano.source, "Defect-free source cloud")->required();
  c_ano->add_option("--target", ano.target, "Organized target scene")->required();
  c_ano->add_option("--gt", ano.gt, "Ground-truth mask (PGM or CSV) for PRO evaluation");
  c_ano->add_option("--k", ap.k, "Neighbours per vertex")->capture_default_str()->check(CLI::PositiveNumber);
  c_ano->add_option("--m", ap.m, "Eigenmaps compared")->capture_default_str()->check(CLI::PositiveNumber);
  c_ano->add_option("--l", ap.l, "Fraction of target vertices cross-connected")->capture_default_str();
  c_ano->add_option("--alpha", ap.alpha, "Cross-connection penalization")->capture_default_str();
  c_ano->add_option("--seed", ap.seed, "Random seed")->required();
  c_ano->add_option("--z-quantile", ap.z_quantile, "Background height quantile")->capture_default_str();
  c_ano->add_option("--max-points", ap.max_points, "Subsampling cap")->capture_default_str();
  c_ano->add_flag("--anisotropic", ap.anisotropic, "Per-axis scaling before ICP");
  c_ano->add_flag("--pre-registered", ap.pre_registered, "Inputs already share a frame; skip PCA + ICP");
  c_ano->add_flag("--auto-connect", ap.auto_connect, "Bridge disconnected kNN graphs");
  c_ano->add_option("--score-scale", ano.score_scale, "Divide scores by this instead of min-max normalizing");
  c_ano->add_option("--sigma-mode", ano.sigma_mode, "global or per-shape")->capture_default_str();
  c_ano->add_option("--fpr-limit", ano.fpr_limit, "PRO integration limit")->capture_default_str();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval-pro", "Normalized area under the PRO curve");
  add_common(c_ev, common);
  c_ev->add_option("--map", ev.map, "Score map (CSV or PGM)");
  c_ev->add_option("--gt", ev.gt, "Ground-truth mask (CSV or PGM)");
  c_ev->add_option("--manifest", ev.manifest, "CSV with category,map,gt rows (pooled per category)");
  c_ev->add_option("--fpr-limit", ev.fpr_limit, "Integration limit")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*c_eig) return run_eigenmaps(common, eig);
    if (*c_mat) {
      if (*pw_opt) mat.pointwise = pointwise;
      return run_match(common, mat);
    }
    if (*c_bse) return run_bse(common, bse);
    if (*c_bench) return run_bse_bench(common, bench);
    if (*c_ano) return run_anomaly(common, ano);
    if (*c_ev) return run_eval(common, ev);
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return report_error("parse", e.what(), 2);
  }
  return 2;
}
