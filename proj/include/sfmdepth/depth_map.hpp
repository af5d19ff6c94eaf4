#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "sfmdepth/error.hpp"
#include "sfmdepth/grid.hpp"

namespace sfmdepth {

using PointId = std::uint64_t;
inline constexpr std::int64_t kNoSourcePoint = -1;

/// Per-view projection of the SfM point cloud. A depth of 0 marks an empty
/// pixel; every present depth is strictly positive and has a source point.
struct SparseDepthMap {
  Grid<double> depth;
  Grid<std::int64_t> source_point;

  SparseDepthMap() = default;
  SparseDepthMap(int width, int height)
      : depth(width, height, 0.0), source_point(width, height, kNoSourcePoint) {}

  int width() const noexcept { return depth.width(); }
  int height() const noexcept { return depth.height(); }

  bool has(int row, int col) const { return depth(row, col) > 0.0; }
  bool has(std::size_t i) const { return depth[i] > 0.0; }

  void set(int row, int col, double value, std::int64_t source) {
    depth(row, col) = value;
    source_point(row, col) = source;
  }
  void clear(int row, int col) { set(row, col, 0.0, kNoSourcePoint); }

  std::size_t count() const {
    std::size_t n = 0;
    for (double d : depth.values()) n += d > 0.0 ? 1 : 0;
    return n;
  }

  friend bool operator==(const SparseDepthMap&, const SparseDepthMap&) = default;
};

enum class ScaleDomain { Metric, Normalized };

inline std::string_view to_string(ScaleDomain d) {
  return d == ScaleDomain::Metric ? "metric" : "normalized";
}

inline ScaleDomain parse_scale_domain(std::string_view s) {
  if (s == "metric" || s == "Metric") return ScaleDomain::Metric;
  if (s == "normalized" || s == "Normalized") return ScaleDomain::Normalized;
  fail(ErrorCode::MalformedRecord, "unknown scale_domain '" + std::string(s) + "'");
}

/// Dense per-pixel depth with a validity mask, in either metric scene units or
/// the normalized [-1, 1] conditioning domain.
struct DenseDepthMap {
  Grid<double> depth;
  Grid<std::uint8_t> valid;
  ScaleDomain domain = ScaleDomain::Metric;

  DenseDepthMap() = default;
  DenseDepthMap(int width, int height, ScaleDomain d = ScaleDomain::Metric)
      : depth(width, height, 0.0), valid(width, height, 0), domain(d) {}

  int width() const noexcept { return depth.width(); }
  int height() const noexcept { return depth.height(); }

  bool is_valid(int row, int col) const { return valid(row, col) != 0; }
  bool is_valid(std::size_t i) const { return valid[i] != 0; }

  void set(int row, int col, double value) {
    depth(row, col) = value;
    valid(row, col) = 1;
  }
  void invalidate(std::size_t i) {
    depth[i] = 0.0;
    valid[i] = 0;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid.values()) n += v ? 1 : 0;
    return n;
  }

  friend bool operator==(const DenseDepthMap&, const DenseDepthMap&) = default;
};

/// Rounds every value through float32, the at-rest precision of depth files.
/// Stage chains apply this at the same boundaries where the CLI writes files.
inline Grid<double> quantize_f32(Grid<double> g) {
  for (double& v : g.values()) v = static_cast<double>(static_cast<float>(v));
  return g;
}

inline DenseDepthMap quantize_f32(DenseDepthMap m) {
  m.depth = quantize_f32(std::move(m.depth));
  return m;
}

inline SparseDepthMap quantize_f32(SparseDepthMap m) {
  for (std::size_t i = 0; i < m.depth.size(); ++i) {
    const float f = static_cast<float>(m.depth[i]);
    // A positive double can underflow to 0.0f; keep it present.
    m.depth[i] = (m.depth[i] > 0.0 && f <= 0.0f) ? static_cast<double>(
                                                        std::nextafter(0.0f, 1.0f))
                                                  : static_cast<double>(f);
  }
  return m;
}

}  // namespace sfmdepth
