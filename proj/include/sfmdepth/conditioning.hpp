#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "sfmdepth/depth_map.hpp"

namespace sfmdepth {

/// Post-trim depth extremes and their expanded normalization interval.
struct NormalizationRange {
  double d_min_adj = 0.0;
  double d_max_adj = 0.0;
  double raw_min = 0.0;
  double raw_max = 0.0;

  bool degenerate() const { return !(d_min_adj > 0.0 && d_min_adj < d_max_adj); }

  friend bool operator==(const NormalizationRange&, const NormalizationRange&) = default;
};

struct RangeExpansion {
  double low = 0.8;
  double high = 1.2;
};

inline constexpr double kDefaultTrimFraction = 0.02;

/// Drops floor(trim_fraction * n) of the sorted valued depths from each end and
/// expands the survivors' extremes by the given factors.
inline NormalizationRange compute_range(const SparseDepthMap& sparse,
                                        double trim_fraction = kDefaultTrimFraction,
                                        RangeExpansion expansion = {}) {
  if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
    fail(ErrorCode::InvalidConfig, "trim_fraction must lie in [0, 0.5)");
  }
  if (!(expansion.low > 0.0 && expansion.low <= 1.0 && expansion.high >= 1.0)) {
    fail(ErrorCode::InvalidConfig, "range expansion must satisfy 0 < low <= 1 <= high");
  }
  std::vector<double> values;
  values.reserve(sparse.count());
  for (double d : sparse.depth.values()) {
    if (d > 0.0) values.push_back(d);
  }
  if (values.empty()) fail(ErrorCode::EmptySparseDepth, "no valued pixels");
  std::sort(values.begin(), values.end());

  const auto n = values.size();
  const auto drop = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(n)));
  NormalizationRange r;
  r.raw_min = values[drop];
  r.raw_max = values[n - 1 - drop];
  if (!(r.raw_min < r.raw_max)) {
    fail(ErrorCode::DegenerateRange,
         "trimmed depth range [" + std::to_string(r.raw_min) + ", " + std::to_string(r.raw_max) +
             "] has zero width");
  }
  r.d_min_adj = expansion.low * r.raw_min;
  r.d_max_adj = expansion.high * r.raw_max;
  return r;
}

/// Keeps only the valued pixels inside [raw_min, raw_max].
inline SparseDepthMap trim_to_range(const SparseDepthMap& sparse, const NormalizationRange& range) {
  SparseDepthMap out = sparse;
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    const double d = out.depth[i];
    if (d > 0.0 && (d < range.raw_min || d > range.raw_max)) {
      out.depth[i] = 0.0;
      out.source_point[i] = kNoSourcePoint;
    }
  }
  return out;
}

namespace detail {

struct ValuedPixel {
  int row;
  int col;
  double depth;
};

inline std::vector<ValuedPixel> valued_pixels(const SparseDepthMap& sparse) {
  std::vector<ValuedPixel> out;
  for (int r = 0; r < sparse.height(); ++r) {
    for (int c = 0; c < sparse.width(); ++c) {
      if (sparse.has(r, c)) out.push_back({r, c, sparse.depth(r, c)});
    }
  }
  return out;
}

// Neighbour ordering key: squared distance, then (row, col).
struct NeighbourKey {
  std::int64_t d2;
  int row;
  int col;
  double depth;

  friend bool operator<(const NeighbourKey& a, const NeighbourKey& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  }
};

/// Uniform bucket grid over the valued pixels for exact k-nearest queries.
class PixelBuckets {
 public:
  PixelBuckets(const std::vector<ValuedPixel>& pixels, int width, int height) {
    const double area = static_cast<double>(width) * static_cast<double>(height);
    cell_ = std::max(1, static_cast<int>(std::lround(
                            std::sqrt(area / static_cast<double>(std::max<std::size_t>(pixels.size(), 1))))));
    cols_ = (width + cell_ - 1) / cell_;
    rows_ = (height + cell_ - 1) / cell_;
    buckets_.assign(static_cast<std::size_t>(cols_) * static_cast<std::size_t>(rows_), {});
    for (const auto& p : pixels) buckets_[bucket_index(p.row / cell_, p.col / cell_)].push_back(p);
  }

  /// Exact k nearest valued pixels to (row, col) under NeighbourKey order.
  void query(int row, int col, std::size_t k, std::vector<NeighbourKey>& best) const {
    best.clear();
    const int br = row / cell_;
    const int bc = col / cell_;
    const int max_ring = std::max(rows_, cols_);
    for (int ring = 0; ring <= max_ring; ++ring) {
      if (best.size() >= k && ring >= 1) {
        // Any pixel in this ring is at least (ring - 1) * cell + 1 away along one axis.
        const std::int64_t lb = static_cast<std::int64_t>(ring - 1) * cell_ + 1;
        if (best[k - 1].d2 < lb * lb) break;
      }
      visit_ring(br, bc, ring, [&](const ValuedPixel& p) {
        const std::int64_t dr = p.row - row;
        const std::int64_t dc = p.col - col;
        NeighbourKey key{dr * dr + dc * dc, p.row, p.col, p.depth};
        if (best.size() < k) {
          best.insert(std::upper_bound(best.begin(), best.end(), key), key);
        } else if (key < best.back()) {
          best.pop_back();
          best.insert(std::upper_bound(best.begin(), best.end(), key), key);
        }
      });
    }
  }

 private:
  std::size_t bucket_index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  template <typename F>
  void visit_ring(int br, int bc, int ring, F&& f) const {
    for (int r = br - ring; r <= br + ring; ++r) {
      if (r < 0 || r >= rows_) continue;
      const bool edge_row = (r == br - ring || r == br + ring);
      const int step = edge_row ? 1 : 2 * ring;
      for (int c = bc - ring; c <= bc + ring; c += std::max(step, 1)) {
        if (c >= 0 && c < cols_) {
          for (const auto& p : buckets_[bucket_index(r, c)]) f(p);
        }
      }
    }
  }

  int cell_ = 1;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::vector<ValuedPixel>> buckets_;
};

/// Inverse-distance weighted mean over neighbours in key order.
inline double inverse_distance_mean(const std::vector<NeighbourKey>& nbrs) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& n : nbrs) {
    const double r = std::sqrt(static_cast<double>(n.d2));
    num += n.depth / r;
    den += 1.0 / r;
  }
  return num / den;
}

// Exact 1D squared distance transform (lower envelope of parabolas) over the
// finite samples of f; positions without any finite sample stay infinite.
inline void squared_edt_1d(const std::vector<double>& f, std::vector<double>& out,
                           std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  out.assign(static_cast<std::size_t>(n), inf);
  if (k < 0) return;
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace detail

/// Fills every empty pixel with the inverse-distance weighted mean of its k
/// nearest valued pixels (ties broken by (row, col)). Valued pixels keep their
/// depth. k = 0 returns the sparse depth with empty pixels as 0.
inline Grid<double> densify_knn(const SparseDepthMap& sparse, int k) {
  if (k < 0) fail(ErrorCode::InvalidConfig, "k must be >= 0");
  if (k == 0) return sparse.depth;
  const auto pixels = detail::valued_pixels(sparse);
  if (pixels.size() < static_cast<std::size_t>(k)) {
    fail(ErrorCode::TooFewPoints,
         "k=" + std::to_string(k) + ", available=" + std::to_string(pixels.size()));
  }
  Grid<double> out = sparse.depth;
  const detail::PixelBuckets buckets(pixels, sparse.width(), sparse.height());
  std::vector<detail::NeighbourKey> best;
  best.reserve(static_cast<std::size_t>(k) + 1);
  for (int r = 0; r < sparse.height(); ++r) {
    for (int c = 0; c < sparse.width(); ++c) {
      if (sparse.has(r, c)) continue;
      buckets.query(r, c, static_cast<std::size_t>(k), best);
      out(r, c) = detail::inverse_distance_mean(best);
    }
  }
  return out;
}

/// Exact Euclidean distance (pixels) from each pixel to the nearest valued pixel.
inline Grid<double> distance_map(const SparseDepthMap& sparse) {
  const int w = sparse.width();
  const int h = sparse.height();
  if (sparse.count() == 0) fail(ErrorCode::EmptySparseDepth, "distance map needs a valued pixel");
  constexpr double inf = std::numeric_limits<double>::infinity();
  Grid<double> sq(w, h, inf);
  std::vector<double> f;
  std::vector<double> g;
  std::vector<int> v;
  std::vector<double> z;

  for (int c = 0; c < w; ++c) {
    f.assign(static_cast<std::size_t>(h), inf);
    for (int r = 0; r < h; ++r) f[r] = sparse.has(r, c) ? 0.0 : inf;
    detail::squared_edt_1d(f, g, v, z);
    for (int r = 0; r < h; ++r) sq(r, c) = g[r];
  }
  Grid<double> out(w, h, 0.0);
  for (int r = 0; r < h; ++r) {
    f.assign(static_cast<std::size_t>(w), inf);
    for (int c = 0; c < w; ++c) f[c] = sq(r, c);
    detail::squared_edt_1d(f, g, v, z);
    for (int c = 0; c < w; ++c) out(r, c) = std::sqrt(g[c]);
  }
  return out;
}

inline double normalize_value(double d, const NormalizationRange& range) {
  const double n = 2.0 * (d - range.d_min_adj) / (range.d_max_adj - range.d_min_adj) - 1.0;
  return std::clamp(n, -1.0, 1.0);
}

inline double denormalize_value(double n, const NormalizationRange& range) {
  return std::lerp(range.d_min_adj, range.d_max_adj, 0.5 * (std::clamp(n, -1.0, 1.0) + 1.0));
}

inline void require_range(const NormalizationRange& range) {
  if (range.degenerate()) fail(ErrorCode::DegenerateRange, "normalization range is degenerate");
}

/// Affine map of [d_min_adj, d_max_adj] onto [-1, 1], clamped.
inline Grid<double> normalize(const Grid<double>& depth, const NormalizationRange& range) {
  require_range(range);
  Grid<double> out = depth;
  for (double& d : out.values()) d = normalize_value(d, range);
  return out;
}

inline Grid<double> denormalize(const Grid<double>& norm_depth, const NormalizationRange& range) {
  require_range(range);
  Grid<double> out = norm_depth;
  for (double& d : out.values()) d = denormalize_value(d, range);
  return out;
}

/// Normalizes the valid pixels of a metric map (e.g. ground truth for training
/// exports, which share the SfM range).
inline DenseDepthMap normalize(const DenseDepthMap& metric, const NormalizationRange& range) {
  require_range(range);
  if (metric.domain != ScaleDomain::Metric) fail(ErrorCode::DomainMismatch, "expected metric map");
  DenseDepthMap out = metric;
  out.domain = ScaleDomain::Normalized;
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    if (out.is_valid(i)) out.depth[i] = normalize_value(out.depth[i], range);
  }
  return out;
}

inline DenseDepthMap denormalize(const DenseDepthMap& normalized, const NormalizationRange& range) {
  require_range(range);
  if (normalized.domain != ScaleDomain::Normalized) {
    fail(ErrorCode::DomainMismatch, "expected normalized map");
  }
  DenseDepthMap out = normalized;
  out.domain = ScaleDomain::Metric;
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    if (out.is_valid(i)) out.depth[i] = denormalize_value(out.depth[i], range);
  }
  return out;
}

/// Area-average downsampling by an integer factor. When the factor does not
/// divide the size, the map is first padded by edge replication to the next
/// multiple; the output is ceil(H/f) x ceil(W/f).
inline Grid<double> downsample_distance_map(const Grid<double>& dist, int factor) {
  if (factor < 1) fail(ErrorCode::InvalidConfig, "downsample factor must be >= 1");
  if (factor == 1) return dist;
  const int ow = (dist.width() + factor - 1) / factor;
  const int oh = (dist.height() + factor - 1) / factor;
  Grid<double> out(ow, oh, 0.0);
  const double inv_area = 1.0 / (static_cast<double>(factor) * factor);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double sum = 0.0;
      for (int dr = 0; dr < factor; ++dr) {
        const int sr = std::min(r * factor + dr, dist.height() - 1);
        for (int dc = 0; dc < factor; ++dc) {
          const int sc = std::min(c * factor + dc, dist.width() - 1);
          sum += dist(sr, sc);
        }
      }
      out(r, c) = sum * inv_area;
    }
  }
  return out;
}

struct ConditioningOptions {
  int k = 3;
  double trim_fraction = kDefaultTrimFraction;
  RangeExpansion expansion{};
  bool use_distance_map = true;
  /// Compute the distance map over all valued pixels rather than the trimmed set.
  bool distance_map_pre_trim = false;
};

/// Conditioning signals handed to a depth provider. The densified depth is in
/// the normalized [-1, 1] domain.
struct ConditioningBundle {
  Grid<double> densified_depth;
  std::optional<Grid<double>> distance_map;
  NormalizationRange range;
  int k_used = 0;
  /// Sparse depth after percentile trimming; alignment pairs come from here.
  SparseDepthMap trimmed;
};

inline ConditioningBundle build_conditioning(const SparseDepthMap& sparse,
                                             const ConditioningOptions& opts = {}) {
  ConditioningBundle b;
  b.range = compute_range(sparse, opts.trim_fraction, opts.expansion);
  b.trimmed = trim_to_range(sparse, b.range);
  b.k_used = opts.k;
  b.densified_depth = normalize(densify_knn(b.trimmed, opts.k), b.range);
  if (opts.use_distance_map) {
    b.distance_map = distance_map(opts.distance_map_pre_trim ? sparse : b.trimmed);
  }
  return b;
}

}  // namespace sfmdepth
