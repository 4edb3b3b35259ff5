#include "specmatch/anomaly.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>

#include "specmatch/error.hpp"
#include "specmatch/kdtree.hpp"
#include "specmatch/text_io.hpp"

namespace specmatch {

namespace {

constexpr std::size_t kAllThresholdsUpTo = 100000;
constexpr std::size_t kSampledThresholds = 2000;

void check_pair(const ScoreMap& map, const GroundTruth& gt) {
  if (map.height != gt.height || map.width != gt.width) {
    throw Error(ErrorKind::dimension, "score map is " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                                          " but the ground truth is " + std::to_string(gt.height) + "x" +
                                          std::to_string(gt.width));
  }
  if (map.values.size() != map.height * map.width) throw Error(ErrorKind::dimension, "score map size mismatch");
}

// Header tokens of a PGM, skipping comments; returns the offset after the
// single whitespace byte that ends the header.
std::size_t pgm_header(std::string_view data, std::array<long long, 3>& fields, bool& binary) {
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '2' && data[1] != '5')) {
    throw Error(ErrorKind::parse, "not a P2/P5 PGM image");
  }
  binary = data[1] == '5';
  std::size_t pos = 2;
  for (int f = 0; f < 3; ++f) {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw Error(ErrorKind::parse, "truncated PGM header");
    fields[static_cast<std::size_t>(f)] = text::parse_int(data.substr(start, pos - start), "PGM header");
  }
  if (pos >= data.size() && binary) throw Error(ErrorKind::parse, "PGM has no pixel data");
  return pos + 1;
}

// Pixel values of a PGM divided by maxval.
std::vector<double> parse_pgm(std::string_view data, std::size_t& height, std::size_t& width) {
  std::array<long long, 3> f{};
  bool binary = false;
  const std::size_t offset = pgm_header(data, f, binary);
  if (f[0] <= 0 || f[1] <= 0 || f[2] <= 0 || f[2] > 65535) throw Error(ErrorKind::parse, "bad PGM dimensions");
  width = static_cast<std::size_t>(f[0]);
  height = static_cast<std::size_t>(f[1]);
  const double maxval = static_cast<double>(f[2]);
  const std::size_t count = width * height;
  std::vector<double> values(count);
  if (binary) {
    const std::size_t bytes = f[2] > 255 ? 2 : 1;
    if (data.size() < offset + count * bytes) throw Error(ErrorKind::parse, "PGM pixel data is truncated");
    for (std::size_t i = 0; i < count; ++i) {
      unsigned v = static_cast<unsigned char>(data[offset + i * bytes]);
      if (bytes == 2) v = (v << 8) | static_cast<unsigned char>(data[offset + i * bytes + 1]);
      values[i] = v / maxval;
    }
  } else {
    std::size_t i = 0;
    std::size_t pos = offset;
    while (i < count) {
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      const std::size_t start = pos;
      while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      if (start == pos) throw Error(ErrorKind::parse, "PGM pixel data is truncated");
      values[i++] = static_cast<double>(text::parse_int(data.substr(start, pos - start), "PGM pixel")) / maxval;
    }
  }
  return values;
}

std::vector<double> parse_grid_csv(std::string_view text_in, std::size_t& height, std::size_t& width) {
  std::vector<double> values;
  height = 0;
  width = 0;
  for (auto line : text::split(text_in, '\n')) {
    line = text::trim(line);
    if (line.empty()) continue;
    const auto fields = text::split(line, ',');
    if (height == 0) width = fields.size();
    if (fields.size() != width) {
      throw Error(ErrorKind::parse, "grid row " + std::to_string(height + 1) + " has " + std::to_string(fields.size()) +
                                        " columns, expected " + std::to_string(width));
    }
    for (auto f : fields) values.push_back(text::parse_double(f, "grid value"));
    ++height;
  }
  if (height == 0) throw Error(ErrorKind::empty, "grid CSV has no rows");
  return values;
}

bool has_extension(const std::string& path, std::string_view ext) {
  if (path.size() < ext.size()) return false;
  auto tail = path.substr(path.size() - ext.size());
  std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char c) { return std::tolower(c); });
  return tail == ext;
}

}  // namespace

GroundTruth ground_truth_from_mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> mask) {
  if (mask.size() != height * width) throw Error(ErrorKind::dimension, "mask size does not match its dimensions");
  GroundTruth gt;
  gt.height = height;
  gt.width = width;
  for (auto& v : mask) v = v ? 1 : 0;
  gt.mask = std::move(mask);
  std::vector<std::uint8_t> seen(gt.mask.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < gt.mask.size(); ++start) {
    if (!gt.mask[start] || seen[start]) continue;
    std::vector<std::size_t> region;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      region.push_back(p);
      const auto r = static_cast<long long>(p / width);
      const auto c = static_cast<long long>(p % width);
      for (long long dr = -1; dr <= 1; ++dr) {
        for (long long dc = -1; dc <= 1; ++dc) {
          const long long rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long long>(height) || cc >= static_cast<long long>(width)) continue;
          const auto q = static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(cc);
          if (gt.mask[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    std::sort(region.begin(), region.end());
    gt.regions.push_back(std::move(region));
  }
  return gt;
}

std::size_t dilation_size(double kept_fraction) {
  if (!(kept_fraction > 0.0 && kept_fraction <= 1.0)) {
    throw Error(ErrorKind::precondition, "kept fraction must lie in (0, 1]");
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / kept_fraction)));
}

std::vector<double> dilate(const std::vector<double>& image, std::size_t height, std::size_t width, std::size_t size) {
  if (size <= 1) return image;
  const auto lo = -static_cast<long long>(size / 2);
  const auto hi = static_cast<long long>(size - 1 - size / 2);
  // the square element is separable: rows, then columns
  std::vector<double> tmp(image.size());
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (long long d = lo; d <= hi; ++d) {
        const long long cc = static_cast<long long>(c) + d;
        if (cc < 0 || cc >= static_cast<long long>(width)) continue;
        best = std::max(best, image[r * width + static_cast<std::size_t>(cc)]);
      }
      tmp[r * width + c] = best;
    }
  }
  std::vector<double> out(image.size());
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (long long d = lo; d <= hi; ++d) {
        const long long rr = static_cast<long long>(r) + d;
        if (rr < 0 || rr >= static_cast<long long>(height)) continue;
        best = std::max(best, tmp[static_cast<std::size_t>(rr) * width + c]);
      }
      out[r * width + c] = best;
    }
  }
  return out;
}

ScoreMap back_project(std::span<const PointScore> scores, const PointCloud& cloud, std::size_t height,
                      std::size_t width, double kept_fraction) {
  if (!cloud.grid_index) throw Error(ErrorKind::precondition, "back-projection needs a cloud with grid indices");
  ScoreMap map;
  map.height = height;
  map.width = width;
  map.kept_fraction = kept_fraction;
  map.values.assign(height * width, 0.0);
  const auto& grid = *cloud.grid_index;
  for (const auto& s : scores) {
    if (s.target_index >= grid.size()) throw Error(ErrorKind::dimension, "score index outside the cloud");
    const auto row = static_cast<std::size_t>(grid[s.target_index].row);
    const auto col = static_cast<std::size_t>(grid[s.target_index].col);
    if (row >= height || col >= width) throw Error(ErrorKind::dimension, "grid index outside the image");
    if (!std::isfinite(s.score) || s.score < 0.0) throw Error(ErrorKind::precondition, "scores must be finite and >= 0");
    auto& px = map.values[row * width + col];
    px = std::max(px, s.score);
  }
  map.values = dilate(map.values, height, width, dilation_size(kept_fraction));
  return map;
}

ProCurve pro_curve(std::span<const ScoreMap> maps, std::span<const GroundTruth> gts) {
  if (maps.size() != gts.size()) throw Error(ErrorKind::dimension, "need one ground truth per score map");
  if (maps.empty()) throw Error(ErrorKind::empty, "no score maps");

  std::vector<double> scores;
  std::vector<long long> label;  // -1 anomaly-free, else global region id
  std::vector<double> region_share;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    check_pair(maps[i], gts[i]);
    std::vector<long long> local(gts[i].mask.size(), -1);
    for (const auto& region : gts[i].regions) {
      for (auto p : region) local[p] = static_cast<long long>(region_share.size());
      region_share.push_back(1.0 / static_cast<double>(region.size()));
    }
    for (std::size_t p = 0; p < local.size(); ++p) {
      if (!std::isfinite(maps[i].values[p])) throw Error(ErrorKind::precondition, "score map has non-finite values");
      // anomalous pixels outside any region cannot occur; mask and regions agree
      scores.push_back(maps[i].values[p]);
      label.push_back(local[p]);
    }
  }
  const auto normal_count = static_cast<std::size_t>(std::count(label.begin(), label.end(), -1));
  if (normal_count == 0) throw Error(ErrorKind::degenerate, "ground truth has no anomaly-free pixels");
  if (region_share.empty()) throw Error(ErrorKind::precondition, "ground truth has no anomalous region");
  const double regions = static_cast<double>(region_share.size());

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });

  // thresholds, descending
  std::vector<double> unique_desc;
  for (auto i : order) {
    if (unique_desc.empty() || scores[i] != unique_desc.back()) unique_desc.push_back(scores[i]);
  }
  std::vector<double> thresholds;
  if (unique_desc.size() <= kAllThresholdsUpTo) {
    thresholds = std::move(unique_desc);
  } else {
    const std::size_t u = unique_desc.size();
    for (std::size_t t = 0; t < kSampledThresholds; ++t) {
      const auto idx = static_cast<std::size_t>(
          std::llround(static_cast<double>(t) * static_cast<double>(u - 1) / static_cast<double>(kSampledThresholds - 1)));
      if (thresholds.empty() || unique_desc[idx] != thresholds.back()) thresholds.push_back(unique_desc[idx]);
    }
  }

  ProCurve curve;
  curve.fpr.push_back(0.0);
  curve.pro.push_back(0.0);
  std::size_t fp = 0;
  double share = 0.0;
  std::size_t pos = 0;
  for (const double t : thresholds) {
    while (pos < order.size() && scores[order[pos]] >= t) {
      const auto lab = label[order[pos]];
      if (lab < 0) {
        ++fp;
      } else {
        share += region_share[static_cast<std::size_t>(lab)];
      }
      ++pos;
    }
    curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(normal_count));
    curve.pro.push_back(std::min(1.0, share / regions));
  }
  return curve;
}

double integrate_pro(const ProCurve& curve, double fpr_limit) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw Error(ErrorKind::precondition, "FPR limit must lie in (0, 1]");
  if (curve.fpr.empty()) return 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
    const double from = std::min(curve.fpr[i], fpr_limit);
    const double to = i + 1 < curve.fpr.size() ? std::min(curve.fpr[i + 1], fpr_limit) : fpr_limit;
    if (to > from) area += (to - from) * curve.pro[i];
  }
  return std::clamp(area / fpr_limit, 0.0, 1.0);
}

double pro_auc(const ScoreMap& map, const GroundTruth& gt, double fpr_limit) {
  return integrate_pro(pro_curve(std::span(&map, 1), std::span(&gt, 1)), fpr_limit);
}

double pro_auc_pooled(std::span<const ScoreMap> maps, std::span<const GroundTruth> gts, double fpr_limit) {
  return integrate_pro(pro_curve(maps, gts), fpr_limit);
}

std::vector<PointScore> euclidean_scores(const PointCloud& target, const PointCloud& source) {
  validate(target);
  validate(source);
  KdTree tree(source.points);
  std::vector<PointScore> out(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    out[i] = {i, std::sqrt(tree.nearest(target.points[i]).dist_sq)};
  }
  return out;
}

std::vector<PointScore> normalize_scores(std::vector<PointScore> scores, ScoreNormalization mode, double scale) {
  if (scores.empty()) return scores;
  if (mode == ScoreNormalization::fixed) {
    if (!(scale > 0.0)) throw Error(ErrorKind::precondition, "score scale must be positive");
    for (auto& s : scores) s.score = std::max(0.0, s.score / scale);
    return scores;
  }
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end(),
                                            [](const PointScore& a, const PointScore& b) { return a.score < b.score; });
  const double min = lo->score, range = hi->score - lo->score;
  for (auto& s : scores) s.score = range > 0.0 ? (s.score - min) / range : 0.0;
  return scores;
}

std::pair<std::size_t, std::size_t> grid_extent(const PointCloud& cloud) {
  if (!cloud.grid_index || cloud.grid_index->empty()) throw Error(ErrorKind::precondition, "cloud has no grid index");
  std::size_t h = 0, w = 0;
  for (const auto& g : *cloud.grid_index) {
    h = std::max(h, static_cast<std::size_t>(g.row) + 1);
    w = std::max(w, static_cast<std::size_t>(g.col) + 1);
  }
  return {h, w};
}

AnomalyResult anomaly_pipeline(const PointCloud& source, const PointCloud& target_scene, std::size_t height,
                               std::size_t width, const AnomalyParams& params) {
  if (!target_scene.grid_index) throw Error(ErrorKind::precondition, "target scene must be organized (grid indices)");
  validate(source);
  validate(target_scene);

  const PointCloud target_fg = remove_background(target_scene, params.z_quantile);
  const PointCloud source_fg = source.grid_index ? remove_background(source, params.z_quantile) : source;
  auto tsub = subsample(target_fg, params.max_points, params.seed);
  auto ssub = subsample(source_fg, params.max_points, params.seed + 1);
  const double kept_fraction = static_cast<double>(tsub.cloud.size()) / static_cast<double>(target_fg.size());

  AnomalyResult result;
  const PointCloud moving = params.anisotropic ? anisotropic_prescale(ssub.cloud, tsub.cloud) : ssub.cloud;
  const auto reg =
      params.pre_registered ? pass_through(moving, tsub.cloud) : register_rigid(moving, tsub.cloud, params.icp);
  result.registration_rms = reg.rms;
  result.source = reg.aligned;
  result.source.grid_index.reset();
  result.target = std::move(tsub.cloud);

  GraphOptions g;
  g.k = params.k;
  g.auto_connect = params.auto_connect;
  const auto target_graph = build_graph(result.target, g);
  const std::vector<WeightedGraph> source_graphs{build_graph(result.source, g)};
  const std::vector<PointCloud> sources{result.source};
  const auto plan = plan_coupling(result.target, sources, params.l, params.seed, params.alpha);
  const auto system = coupled_laplacian(target_graph, source_graphs, result.target, sources, plan, params.sigma_mode);
  const auto coupled = coupled_eigenmaps(system, params.m, params.solver);
  const auto report = pointwise_scores(coupled, plan, 0, {params.m, params.l, params.k, params.alpha, params.seed});

  result.raw_scores = report.per_point;
  result.zero_norm_rows = report.zero_norm_rows;
  result.scores = normalize_scores(report.per_point, params.normalization, params.score_scale);
  result.map = back_project(result.scores, result.target, height, width, kept_fraction);
  const auto base = normalize_scores(euclidean_scores(result.target, result.source), ScoreNormalization::min_max, 1.0);
  result.baseline = back_project(base, result.target, height, width, kept_fraction);
  return result;
}

std::string format_map_csv(const ScoreMap& map) {
  std::string out;
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      if (c) out += ',';
      out += text::format_double(map.at(r, c), 17);
    }
    out += '\n';
  }
  return out;
}

ScoreMap parse_map_csv(std::string_view text_in) {
  ScoreMap map;
  map.values = parse_grid_csv(text_in, map.height, map.width);
  return map;
}

std::string format_map_pgm(const ScoreMap& map) {
  std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n65535\n";
  for (double v : map.values) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    out += static_cast<char>((q >> 8) & 0xff);
    out += static_cast<char>(q & 0xff);
  }
  return out;
}

ScoreMap parse_map_pgm(std::string_view data) {
  ScoreMap map;
  map.values = parse_pgm(data, map.height, map.width);
  return map;
}

ScoreMap load_map(const std::string& path) {
  const auto data = text::read_file(path);
  return has_extension(path, ".pgm") ? parse_map_pgm(data) : parse_map_csv(data);
}

GroundTruth parse_mask(std::string_view data, bool pgm) {
  std::size_t h = 0, w = 0;
  const auto values = pgm ? parse_pgm(data, h, w) : parse_grid_csv(data, h, w);
  std::vector<std::uint8_t> mask(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) mask[i] = values[i] != 0.0 ? 1 : 0;
  return ground_truth_from_mask(h, w, std::move(mask));
}

GroundTruth load_mask(const std::string& path) { return parse_mask(text::read_file(path), has_extension(path, ".pgm")); }

}  // namespace specmatch
