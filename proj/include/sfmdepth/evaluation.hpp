#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfmdepth/depth_io.hpp"
#include "sfmdepth/depth_map.hpp"
#include "sfmdepth/kdtree.hpp"
#include "sfmdepth/mesh.hpp"
#include "sfmdepth/parallel.hpp"

namespace sfmdepth {

using PointSet = std::vector<Eigen::Vector3d>;

inline constexpr double kDefaultFscoreThreshold = 0.05;

/// Distance from every query point to its nearest neighbour in `targets`.
inline std::vector<double> nearest_distances(const PointSet& queries, const PointSet& targets) {
  const KdTree tree(targets);
  std::vector<double> out(queries.size());
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (queries.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(queries.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) out[i] = std::sqrt(tree.nearest(queries[i]).squared_distance);
  });
  return out;
}

struct ChamferResult {
  double chamfer = 0.0;
  double accuracy = 0.0;
  double completeness = 0.0;
};

struct FscoreResult {
  double fscore = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

namespace detail {

inline void require_points(const PointSet& pred, const PointSet& gt) {
  if (pred.empty()) fail(ErrorCode::EmptyPointSet, "prediction point set is empty");
  if (gt.empty()) fail(ErrorCode::EmptyPointSet, "reference point set is empty");
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double fraction_below(const std::vector<double>& v, double tau) {
  std::size_t n = 0;
  for (double x : v) n += x < tau ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(v.size());
}

inline double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace detail

/// Accuracy: mean pred -> gt nearest distance. Completeness: mean gt -> pred.
inline ChamferResult chamfer(const PointSet& pred, const PointSet& gt) {
  detail::require_points(pred, gt);
  ChamferResult r;
  r.accuracy = detail::mean(nearest_distances(pred, gt));
  r.completeness = detail::mean(nearest_distances(gt, pred));
  r.chamfer = 0.5 * (r.accuracy + r.completeness);
  return r;
}

/// Precision/recall count points strictly closer than tau to the other set.
inline FscoreResult fscore(const PointSet& pred, const PointSet& gt, double tau = kDefaultFscoreThreshold) {
  detail::require_points(pred, gt);
  if (!(tau > 0.0)) fail(ErrorCode::InvalidConfig, "F-score threshold must be > 0");
  FscoreResult r;
  r.precision = detail::fraction_below(nearest_distances(pred, gt), tau);
  r.recall = detail::fraction_below(nearest_distances(gt, pred), tau);
  r.fscore = detail::harmonic(r.precision, r.recall);
  return r;
}

struct RmseResult {
  double rmse = 0.0;
  std::size_t pixels = 0;
};

namespace detail {

template <typename RefValid>
RmseResult depth_rmse_impl(const DenseDepthMap& pred, const Grid<double>& ref, RefValid&& ref_valid) {
  if (pred.depth.width() != ref.width() || pred.depth.height() != ref.height()) {
    fail(ErrorCode::ShapeMismatch, "prediction and reference depth differ in size");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!pred.is_valid(i) || !ref_valid(i)) continue;
    const double e = pred.depth[i] - ref[i];
    sum += e * e;
    ++n;
  }
  if (n == 0) fail(ErrorCode::NoOverlap, "no jointly valid pixels");
  return {std::sqrt(sum / static_cast<double>(n)), n};
}

}  // namespace detail

inline RmseResult depth_rmse_detail(const DenseDepthMap& pred, const DenseDepthMap& ref) {
  return detail::depth_rmse_impl(pred, ref.depth, [&](std::size_t i) { return ref.is_valid(i); });
}
inline RmseResult depth_rmse_detail(const DenseDepthMap& pred, const SparseDepthMap& ref) {
  return detail::depth_rmse_impl(pred, ref.depth, [&](std::size_t i) { return ref.has(i); });
}

/// Root mean square depth error over pixels valid in both maps.
template <typename Ref>
double depth_rmse(const DenseDepthMap& pred, const Ref& ref) {
  return depth_rmse_detail(pred, ref).rmse;
}

/// Area-weighted uniform samples on the mesh surface.
inline PointSet sample_mesh(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.triangles.empty()) fail(ErrorCode::EmptyMesh, "mesh has no triangles");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += triangle_area(mesh, t);
    cumulative[t] = total;
  }
  if (!(total > 0.0)) fail(ErrorCode::EmptyMesh, "mesh has zero surface area");
  PointSet out;
  out.reserve(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto& tri = mesh.triangles[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const Eigen::Vector3d& a = mesh.vertices[tri[0]];
    const Eigen::Vector3d& b = mesh.vertices[tri[1]];
    const Eigen::Vector3d& c = mesh.vertices[tri[2]];
    out.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return out;
}

struct ViewRmse {
  std::string image;
  double rmse = 0.0;
  std::size_t pixels = 0;
};

struct MetricsReport {
  std::optional<ChamferResult> geometry;
  std::optional<FscoreResult> fscore;
  double threshold = kDefaultFscoreThreshold;
  std::optional<double> depth_rmse;
  std::size_t pred_samples = 0;
  std::size_t gt_samples = 0;
  std::size_t depth_pixels = 0;
  std::vector<ViewRmse> per_view;
  /// Fusion produced no geometry: Chamfer is undefined and F-score is 0.
  bool empty_reconstruction = false;
};

/// Geometry metrics from a single pair of nearest-neighbour passes.
inline void evaluate_geometry(const PointSet& pred, const PointSet& gt, double tau, MetricsReport& report) {
  detail::require_points(pred, gt);
  if (!(tau > 0.0)) fail(ErrorCode::InvalidConfig, "F-score threshold must be > 0");
  const auto to_gt = nearest_distances(pred, gt);
  const auto to_pred = nearest_distances(gt, pred);
  ChamferResult c;
  c.accuracy = detail::mean(to_gt);
  c.completeness = detail::mean(to_pred);
  c.chamfer = 0.5 * (c.accuracy + c.completeness);
  FscoreResult f;
  f.precision = detail::fraction_below(to_gt, tau);
  f.recall = detail::fraction_below(to_pred, tau);
  f.fscore = detail::harmonic(f.precision, f.recall);
  report.geometry = c;
  report.fscore = f;
  report.threshold = tau;
  report.pred_samples = pred.size();
  report.gt_samples = gt.size();
}

inline Json to_json(const MetricsReport& r) {
  Json j = Json::object();
  if (r.geometry) {
    j["chamfer"] = r.geometry->chamfer;
    j["accuracy"] = r.geometry->accuracy;
    j["completeness"] = r.geometry->completeness;
  }
  if (r.fscore) {
    j["fscore"] = r.fscore->fscore;
    j["precision"] = r.fscore->precision;
    j["recall"] = r.fscore->recall;
    j["threshold"] = r.threshold;
  }
  if (r.depth_rmse) j["depth_rmse"] = *r.depth_rmse;
  if (r.empty_reconstruction) j["empty_reconstruction"] = true;
  j["sample_counts"] = {{"pred", r.pred_samples}, {"gt", r.gt_samples}, {"depth_pixels", r.depth_pixels}};
  Json views = Json::array();
  for (const auto& v : r.per_view) views.push_back({{"image", v.image}, {"rmse", v.rmse}, {"pixels", v.pixels}});
  j["per_view"] = views;
  return j;
}

/// Aligned two-column text table.
inline std::string to_table(const MetricsReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  auto row = [&](const std::string& name, double v) { out << std::left << std::setw(16) << name << std::right << std::setw(16) << v << '\n'; };
  auto count = [&](const std::string& name, std::size_t v) { out << std::left << std::setw(16) << name << std::right << std::setw(16) << v << '\n'; };
  out << std::left << std::setw(16) << "metric" << std::right << std::setw(16) << "value" << '\n';
  if (r.geometry) {
    row("chamfer", r.geometry->chamfer);
    row("accuracy", r.geometry->accuracy);
    row("completeness", r.geometry->completeness);
  }
  if (r.fscore) {
    row("fscore", r.fscore->fscore);
    row("precision", r.fscore->precision);
    row("recall", r.fscore->recall);
    row("threshold", r.threshold);
  }
  if (r.depth_rmse) row("depth_rmse", *r.depth_rmse);
  if (r.empty_reconstruction) out << std::left << std::setw(16) << "reconstruction" << std::right << std::setw(16) << "empty" << '\n';
  count("pred_samples", r.pred_samples);
  count("gt_samples", r.gt_samples);
  count("depth_pixels", r.depth_pixels);
  for (const auto& v : r.per_view) row("rmse:" + v.image, v.rmse);
  return out.str();
}

struct MetricBounds {
  std::optional<double> chamfer_max;
  std::optional<double> fscore_min;
  std::optional<double> depth_rmse_max;
};

/// Human-readable list of violated bounds; a bound on a metric that was not
/// computed counts as violated.
inline std::vector<std::string> check_bounds(const MetricsReport& r, const MetricBounds& b) {
  std::vector<std::string> out;
  if (b.chamfer_max && (!r.geometry || !(r.geometry->chamfer <= *b.chamfer_max))) {
    out.push_back("chamfer exceeds " + std::to_string(*b.chamfer_max));
  }
  if (b.fscore_min && (!r.fscore || !(r.fscore->fscore >= *b.fscore_min))) {
    out.push_back("fscore below " + std::to_string(*b.fscore_min));
  }
  if (b.depth_rmse_max && (!r.depth_rmse || !(*r.depth_rmse <= *b.depth_rmse_max))) {
    out.push_back("depth_rmse exceeds " + std::to_string(*b.depth_rmse_max));
  }
  return out;
}

}  // namespace sfmdepth
