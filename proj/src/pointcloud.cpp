#include "specmatch/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "specmatch/error.hpp"
#include "specmatch/random.hpp"
#include "specmatch/text_io.hpp"

namespace specmatch {

namespace {

constexpr int kCoordDigits = 9;

bool is_blank_or_comment(std::string_view line) {
  line = text::trim(line);
  return line.empty() || line.front() == '#';
}

std::vector<std::string_view> fields(std::string_view line) {
  line = text::trim(line);
  if (line.find(',') != std::string_view::npos) return text::split(line, ',');
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = text::split(text, '\n');
  if (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::string where(std::size_t line_no) { return "line " + std::to_string(line_no + 1); }

Eigen::Vector3d finite_point(double x, double y, double z, std::size_t line_no) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
    throw Error(ErrorKind::parse, where(line_no) + ": non-finite coordinate");
  }
  return {x, y, z};
}

PointCloud parse_xyz(std::string_view text) {
  PointCloud cloud;
  auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (is_blank_or_comment(lines[n])) continue;
    auto f = fields(lines[n]);
    if (n == 0 && f.size() == 3 && text::trim(f[0]) == "x") continue;  // header row
    if (f.size() != 3) throw Error(ErrorKind::parse, where(n) + ": expected 3 fields");
    const auto ctx = where(n);
    cloud.points.push_back(finite_point(text::parse_double(f[0], ctx), text::parse_double(f[1], ctx),
                                        text::parse_double(f[2], ctx), n));
  }
  return cloud;
}

PointCloud parse_grid(std::string_view text) {
  PointCloud cloud;
  std::vector<GridIndex> grid;
  std::set<std::pair<int, int>> seen;
  auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (is_blank_or_comment(lines[n])) continue;
    auto f = fields(lines[n]);
    if (n == 0 && f.size() == 5 && text::trim(f[0]) == "row") continue;
    if (f.size() != 5) throw Error(ErrorKind::parse, where(n) + ": expected 5 fields");
    const auto ctx = where(n);
    const auto row = text::parse_int(f[0], ctx);
    const auto col = text::parse_int(f[1], ctx);
    if (row < 0 || col < 0) throw Error(ErrorKind::parse, ctx + ": negative grid index");
    const double x = text::parse_double(f[2], ctx);
    const double y = text::parse_double(f[3], ctx);
    const double z = text::parse_double(f[4], ctx);
    // invalid pixels of the sensor
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) continue;
    if (!seen.emplace(static_cast<int>(row), static_cast<int>(col)).second) {
      throw Error(ErrorKind::parse, ctx + ": duplicate grid index");
    }
    cloud.points.emplace_back(x, y, z);
    grid.push_back({static_cast<int>(row), static_cast<int>(col)});
  }
  cloud.grid_index = std::move(grid);
  return cloud;
}

PointCloud parse_ply(std::string_view text) {
  auto lines = lines_of(text);
  std::size_t n = 0;
  if (lines.empty() || text::trim(lines[0]) != "ply") {
    throw Error(ErrorKind::parse, "missing 'ply' magic");
  }
  long long vertex_count = -1;
  bool in_vertex = false;
  bool vertex_seen_first = false;
  std::vector<std::string> vertex_props;
  bool ascii = false;
  for (n = 1; n < lines.size(); ++n) {
    auto line = text::trim(lines[n]);
    if (line == "end_header") break;
    auto f = fields(line);
    if (f.empty()) continue;
    if (f[0] == "format") {
      if (f.size() < 2 || f[1] != "ascii") throw Error(ErrorKind::parse, "only ascii PLY is supported");
      ascii = true;
    } else if (f[0] == "element") {
      if (f.size() != 3) throw Error(ErrorKind::parse, where(n) + ": malformed element line");
      in_vertex = f[1] == "vertex";
      if (in_vertex) {
        vertex_count = text::parse_int(f[2], where(n));
      } else if (vertex_count < 0) {
        // elements before the vertex block are not supported
        throw Error(ErrorKind::parse, "vertex element must come first");
      }
      vertex_seen_first = vertex_seen_first || in_vertex;
    } else if (f[0] == "property" && in_vertex) {
      if (f.size() < 3 || f[1] == "list") throw Error(ErrorKind::parse, where(n) + ": unsupported vertex property");
      vertex_props.emplace_back(f.back());
    }
  }
  if (n >= lines.size()) throw Error(ErrorKind::parse, "missing end_header");
  if (!ascii) throw Error(ErrorKind::parse, "missing format line");
  if (vertex_count < 0) throw Error(ErrorKind::parse, "missing vertex element");
  auto index_of = [&](const char* name) {
    auto it = std::find(vertex_props.begin(), vertex_props.end(), name);
    if (it == vertex_props.end()) throw Error(ErrorKind::parse, std::string("missing vertex property ") + name);
    return static_cast<std::size_t>(it - vertex_props.begin());
  };
  const auto ix = index_of("x"), iy = index_of("y"), iz = index_of("z");

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(vertex_count));
  std::size_t line_no = n + 1;
  for (long long v = 0; v < vertex_count; ++v, ++line_no) {
    if (line_no >= lines.size()) {
      throw Error(ErrorKind::parse, "header declares " + std::to_string(vertex_count) +
                                        " vertices but file has " + std::to_string(v));
    }
    auto f = fields(lines[line_no]);
    if (f.size() != vertex_props.size()) {
      throw Error(ErrorKind::parse, where(line_no) + ": vertex record has wrong field count");
    }
    const auto ctx = where(line_no);
    cloud.points.push_back(finite_point(text::parse_double(f[ix], ctx), text::parse_double(f[iy], ctx),
                                        text::parse_double(f[iz], ctx), line_no));
  }
  return cloud;
}

}  // namespace

CloudFormat parse_cloud_format(std::string_view name) {
  if (name == "ply" || name == "ply-ascii") return CloudFormat::ply_ascii;
  if (name == "xyz" || name == "xyz-csv" || name == "csv") return CloudFormat::xyz_csv;
  if (name == "grid" || name == "organized-grid") return CloudFormat::organized_grid;
  throw Error(ErrorKind::parse, "unknown cloud format '" + std::string(name) + "'");
}

CloudFormat format_from_extension(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".ply")) return CloudFormat::ply_ascii;
  if (ends_with(".grid") || ends_with(".grid.csv")) return CloudFormat::organized_grid;
  return CloudFormat::xyz_csv;
}

void validate(const PointCloud& cloud) {
  if (cloud.points.empty()) throw Error(ErrorKind::empty, "point cloud '" + cloud.name + "' is empty");
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) throw Error(ErrorKind::parse, "point cloud '" + cloud.name + "' has non-finite coordinates");
  }
  if (cloud.grid_index) {
    if (cloud.grid_index->size() != cloud.points.size()) {
      throw Error(ErrorKind::dimension, "grid_index length differs from point count");
    }
    std::set<std::pair<int, int>> seen;
    for (const auto& g : *cloud.grid_index) {
      if (!seen.emplace(g.row, g.col).second) throw Error(ErrorKind::parse, "duplicate grid index");
    }
  }
}

PointCloud parse_cloud(std::string_view text, CloudFormat format, std::string name) {
  PointCloud cloud;
  switch (format) {
    case CloudFormat::ply_ascii: cloud = parse_ply(text); break;
    case CloudFormat::xyz_csv: cloud = parse_xyz(text); break;
    case CloudFormat::organized_grid: cloud = parse_grid(text); break;
  }
  cloud.name = std::move(name);
  if (cloud.points.empty()) throw Error(ErrorKind::empty, "no points in '" + cloud.name + "'");
  return cloud;
}

PointCloud load_cloud(const std::string& path, CloudFormat format) {
  return parse_cloud(text::read_file(path), format, path);
}

std::string format_cloud(const PointCloud& cloud, CloudFormat format) {
  std::string out;
  auto coord = [](double v) { return text::format_double(v, kCoordDigits); };
  switch (format) {
    case CloudFormat::ply_ascii:
      out += "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
             "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
      for (const auto& p : cloud.points) out += coord(p.x()) + " " + coord(p.y()) + " " + coord(p.z()) + "\n";
      break;
    case CloudFormat::xyz_csv:
      for (const auto& p : cloud.points) out += coord(p.x()) + "," + coord(p.y()) + "," + coord(p.z()) + "\n";
      break;
    case CloudFormat::organized_grid:
      if (!cloud.grid_index) throw Error(ErrorKind::precondition, "cloud has no grid_index");
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        const auto& g = (*cloud.grid_index)[i];
        out += std::to_string(g.row) + "," + std::to_string(g.col) + "," + coord(p.x()) + "," + coord(p.y()) +
               "," + coord(p.z()) + "\n";
      }
      break;
  }
  return out;
}

void save_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
  text::write_file(path, format_cloud(cloud, format));
}

Eigen::Vector3d centroid(std::span<const Eigen::Vector3d> points) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : points) c += p;
  return c / static_cast<double>(points.size());
}

PcaFrame pca_frame(std::span<const Eigen::Vector3d> points) {
  if (points.size() < 4) throw Error(ErrorKind::degenerate, "PCA needs at least 4 points");
  PcaFrame frame;
  frame.centroid = centroid(points);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - frame.centroid;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  // ascending -> descending
  for (int c = 0; c < 3; ++c) {
    frame.axes.col(c) = eig.eigenvectors().col(2 - c);
    frame.variances(c) = std::max(0.0, eig.eigenvalues()(2 - c));
  }
  for (int c = 0; c < 3; ++c) {
    Eigen::Vector3d axis = frame.axes.col(c);
    double m3 = 0.0;
    double scale = 0.0;
    for (const auto& p : points) {
      const double t = axis.dot(p - frame.centroid);
      m3 += t * t * t;
      scale = std::max(scale, std::abs(t));
    }
    m3 /= static_cast<double>(points.size());
    const double tie_eps = 1e-12 * scale * scale * scale;
    bool flip = m3 < -tie_eps;
    if (std::abs(m3) <= tie_eps) {
      // symmetric distribution: point the dominant component of the axis along +
      Eigen::Index k = 0;
      axis.cwiseAbs().maxCoeff(&k);
      flip = axis(k) < 0.0;
    }
    if (flip) frame.axes.col(c) = -axis;
  }
  return frame;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::empty, "quantile of empty sequence");
  q = std::clamp(q, 0.0, 1.0);
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PointCloud remove_background(const PointCloud& cloud, double z_quantile) {
  if (!(z_quantile > 0.0 && z_quantile < 1.0)) {
    throw Error(ErrorKind::precondition, "z_quantile must lie in (0, 1)");
  }
  if (cloud.size() < 4) throw Error(ErrorKind::precondition, "background removal needs at least 4 points");
  const auto frame = pca_frame(cloud.points);
  std::vector<double> height(cloud.size());
  double spread = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d q = frame.to_frame(cloud.points[i]);
    height[i] = q.z();
    spread = std::max(spread, q.cwiseAbs().maxCoeff());
  }
  const double threshold = quantile(height, z_quantile);
  // values within rounding of the threshold count as "on" it
  const double eps = 1e-9 * spread;

  PointCloud out;
  out.name = cloud.name;
  if (cloud.grid_index) out.grid_index.emplace();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (height[i] > threshold + eps) {
      out.points.push_back(cloud.points[i]);
      if (cloud.grid_index) out.grid_index->push_back((*cloud.grid_index)[i]);
    }
  }
  if (out.empty()) throw Error(ErrorKind::degenerate, "background threshold removed every point");
  return out;
}

Subsample subsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed) {
  if (max_points == 0) throw Error(ErrorKind::precondition, "max_points must be positive");
  Subsample result;
  if (cloud.size() <= max_points) {
    result.cloud = cloud;
    result.kept_indices.resize(cloud.size());
    std::iota(result.kept_indices.begin(), result.kept_indices.end(), std::size_t{0});
    return result;
  }
  result.kept_indices = sample_without_replacement(cloud.size(), max_points, seed);
  result.cloud.name = cloud.name;
  result.cloud.points.reserve(max_points);
  if (cloud.grid_index) result.cloud.grid_index.emplace();
  for (auto i : result.kept_indices) {
    result.cloud.points.push_back(cloud.points[i]);
    if (cloud.grid_index) result.cloud.grid_index->push_back((*cloud.grid_index)[i]);
  }
  return result;
}

double diameter(std::span<const Eigen::Vector3d> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::max(best, (points[i] - points[j]).squaredNorm());
    }
  }
  return std::sqrt(best);
}

}  // namespace specmatch
