#pragma once

// Brute-force reference implementations used by the unit and acceptance
// suites. They share no search structure with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "sfmdepth/sfmdepth.hpp"

namespace oracle {

using sfmdepth::Grid;
using sfmdepth::SparseDepthMap;

/// Random sparse map with `count` distinct valued pixels, depths in [lo, hi).
inline SparseDepthMap random_sparse(int w, int h, int count, std::uint64_t seed, double lo = 0.5, double hi = 10.0) {
  std::mt19937_64 rng(seed);
  std::vector<int> idx(static_cast<std::size_t>(w * h));
  for (int i = 0; i < w * h; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<double> depth(lo, hi);
  SparseDepthMap m(w, h);
  for (int i = 0; i < count; ++i) {
    const int p = idx[static_cast<std::size_t>(i)];
    m.set(p / w, p % w, depth(rng), i);
  }
  return m;
}

/// All-pairs k-nearest inverse-distance densification. Neighbours are ranked
/// by (squared distance, row, col) and accumulated in that order.
inline Grid<double> knn(const SparseDepthMap& sparse, int k) {
  struct Valued {
    int r, c;
    double d;
  };
  std::vector<Valued> pts;
  for (int r = 0; r < sparse.height(); ++r)
    for (int c = 0; c < sparse.width(); ++c)
      if (sparse.depth(r, c) > 0.0) pts.push_back({r, c, sparse.depth(r, c)});
  Grid<double> out = sparse.depth;
  if (k == 0) return out;
  std::vector<std::tuple<std::int64_t, int, int, double>> cand;
  for (int r = 0; r < sparse.height(); ++r) {
    for (int c = 0; c < sparse.width(); ++c) {
      if (sparse.depth(r, c) > 0.0) continue;
      cand.clear();
      for (const auto& p : pts) {
        const std::int64_t dr = p.r - r, dc = p.c - c;
        cand.emplace_back(dr * dr + dc * dc, p.r, p.c, p.d);
      }
      std::sort(cand.begin(), cand.end());
      double num = 0.0, den = 0.0;
      for (int i = 0; i < k; ++i) {
        const double dist = std::sqrt(static_cast<double>(std::get<0>(cand[static_cast<std::size_t>(i)])));
        num += std::get<3>(cand[static_cast<std::size_t>(i)]) / dist;
        den += 1.0 / dist;
      }
      out(r, c) = num / den;
    }
  }
  return out;
}

/// All-pairs Euclidean distance to the nearest valued pixel.
inline Grid<double> distance(const SparseDepthMap& sparse) {
  Grid<double> out(sparse.width(), sparse.height(), 0.0);
  for (int r = 0; r < sparse.height(); ++r) {
    for (int c = 0; c < sparse.width(); ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (int rr = 0; rr < sparse.height(); ++rr)
        for (int cc = 0; cc < sparse.width(); ++cc)
          if (sparse.depth(rr, cc) > 0.0)
            best = std::min(best, std::hypot(static_cast<double>(rr - r), static_cast<double>(cc - c)));
      out(r, c) = best;
    }
  }
  return out;
}

/// Sort-and-trim reference for the normalization range (raw_min, raw_max).
inline std::pair<double, double> trimmed_extremes(std::vector<double> values, double trim = 0.02) {
  std::sort(values.begin(), values.end());
  std::size_t drop = 0;
  while (static_cast<double>(drop + 1) <= trim * static_cast<double>(values.size())) ++drop;
  return {values[drop], values[values.size() - 1 - drop]};
}

/// Largest consensus over every ordered-free pair of samples with a positive
/// scale (the model family searched by RANSAC).
inline std::size_t max_consensus(const std::vector<sfmdepth::DepthPair>& pairs, double threshold) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const double dx = pairs[j].pred - pairs[i].pred;
      if (dx == 0.0) continue;
      const double s = (pairs[j].sfm - pairs[i].sfm) / dx;
      if (!(s > 0.0)) continue;
      const double t = pairs[i].sfm - s * pairs[i].pred;
      std::size_t n = 0;
      for (const auto& p : pairs) n += std::abs(s * p.pred + t - p.sfm) < threshold ? 1 : 0;
      best = std::max(best, n);
    }
  }
  return best;
}

/// O(N*M) nearest distances.
inline std::vector<double> nearest(const std::vector<Eigen::Vector3d>& q, const std::vector<Eigen::Vector3d>& t) {
  std::vector<double> out;
  out.reserve(q.size());
  for (const auto& a : q) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : t) {
      const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    out.push_back(std::sqrt(best));
  }
  return out;
}

struct Geometry {
  double accuracy, completeness, chamfer, precision, recall, fscore;
};

inline Geometry geometry(const std::vector<Eigen::Vector3d>& pred, const std::vector<Eigen::Vector3d>& gt, double tau) {
  const auto a = nearest(pred, gt);
  const auto b = nearest(gt, pred);
  Geometry g{};
  for (double d : a) g.accuracy += d;
  for (double d : b) g.completeness += d;
  g.accuracy /= static_cast<double>(a.size());
  g.completeness /= static_cast<double>(b.size());
  g.chamfer = 0.5 * (g.accuracy + g.completeness);
  std::size_t pa = 0, rb = 0;
  for (double d : a) pa += d < tau;
  for (double d : b) rb += d < tau;
  g.precision = static_cast<double>(pa) / static_cast<double>(a.size());
  g.recall = static_cast<double>(rb) / static_cast<double>(b.size());
  g.fscore = g.precision + g.recall > 0.0 ? 2.0 * g.precision * g.recall / (g.precision + g.recall) : 0.0;
  return g;
}

inline std::vector<Eigen::Vector3d> random_points(std::size_t n, std::uint64_t seed, double extent = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  std::vector<Eigen::Vector3d> out(n);
  for (auto& p : out) p = {u(rng), u(rng), u(rng)};
  return out;
}

/// Randomized valid SfM model exercising every camera model, unmatched
/// observations and multi-view tracks.
inline sfmdepth::SfmModel random_model(std::uint64_t seed, int n_images = 4, int n_points = 30) {
  using namespace sfmdepth;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  SfmModel m;
  for (CameraId id = 1; id <= 3; ++id) {
    const auto model = static_cast<CameraModel>((id + seed) % 3);
    const int w = 100 + static_cast<int>(rng() % 500);
    const int h = 80 + static_cast<int>(rng() % 400);
    std::vector<double> p;
    const double f = 50.0 + 500.0 * pos(rng);
    if (model == CameraModel::SimplePinhole) p = {f, w * pos(rng), h * pos(rng)};
    if (model == CameraModel::Pinhole) p = {f, f * (0.9 + 0.2 * pos(rng)), w * pos(rng), h * pos(rng)};
    if (model == CameraModel::SimpleRadial) p = {f, w * pos(rng), h * pos(rng), 0.1 * u(rng)};
    m.cameras.emplace(id, CameraIntrinsics::from_params(id, model, w, h, p));
  }
  for (int i = 0; i < n_images; ++i) {
    PosedImage img;
    img.image_id = static_cast<ImageId>(10 + 3 * i);
    img.camera_id = static_cast<CameraId>(1 + rng() % 3);
    Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
    q.normalize();
    img.qvec = {q.w(), q.x(), q.y(), q.z()};
    img.translation = {u(rng), u(rng), 5.0 * u(rng)};
    img.name = "img_" + std::to_string(i) + (i % 2 ? ".jpg" : ".png");
    m.images.emplace(img.image_id, std::move(img));
  }
  std::vector<ImageId> ids;
  for (const auto& [id, img] : m.images) ids.push_back(id);
  for (int p = 0; p < n_points; ++p) {
    ScenePoint pt;
    pt.point3d_id = static_cast<Point3dId>(1000 + 7 * p);
    pt.xyz = {10 * u(rng), 10 * u(rng), 10 * u(rng)};
    pt.color = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())};
    pt.reproj_error = pos(rng);
    const int n_obs = 1 + static_cast<int>(rng() % ids.size());
    std::vector<ImageId> shuffled = ids;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (int o = 0; o < n_obs; ++o) {
      auto& img = m.images.at(shuffled[static_cast<std::size_t>(o)]);
      pt.track.push_back({img.image_id, static_cast<std::uint32_t>(img.observations.size())});
      img.observations.push_back({Eigen::Vector2d(500 * pos(rng), 400 * pos(rng)), pt.point3d_id});
    }
    m.points.emplace(pt.point3d_id, std::move(pt));
  }
  for (auto& [id, img] : m.images) {
    // Unmatched keypoints.
    for (int k = 0; k < 3; ++k) img.observations.push_back({Eigen::Vector2d(100 * pos(rng), 100 * pos(rng)), std::nullopt});
  }
  return m;
}

}  // namespace oracle
