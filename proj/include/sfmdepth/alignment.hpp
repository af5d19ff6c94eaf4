#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sfmdepth/depth_map.hpp"

namespace sfmdepth {

enum class AlignmentMethod { Ransac, LeastSquare, NoAlignment };
enum class ThresholdMode { RelativeToMedian, Absolute };
/// Space in which the linear model is fitted: depth, or inverse depth.
enum class AlignmentSpace { Depth, InverseDepth };

inline std::string_view to_string(AlignmentMethod m) {
  switch (m) {
    case AlignmentMethod::Ransac: return "ransac";
    case AlignmentMethod::LeastSquare: return "least_square";
    case AlignmentMethod::NoAlignment: return "none";
  }
  return "?";
}

struct AlignmentConfig {
  AlignmentMethod method = AlignmentMethod::Ransac;
  int iterations = 200;
  double threshold = 0.02;
  ThresholdMode threshold_mode = ThresholdMode::RelativeToMedian;
  AlignmentSpace space = AlignmentSpace::Depth;
  int min_samples = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1) fail(ErrorCode::InvalidConfig, "alignment iterations must be >= 1");
    if (!(threshold > 0.0)) fail(ErrorCode::InvalidConfig, "alignment threshold must be > 0");
    if (min_samples != 2) fail(ErrorCode::InvalidConfig, "scale-shift model needs min_samples = 2");
  }
};

/// target ~= scale * source + shift, in `space`.
struct AffineDepthModel {
  double scale = 1.0;
  double shift = 0.0;
  std::size_t inlier_count = 0;
  double inlier_threshold = 0.0;
  AlignmentSpace space = AlignmentSpace::Depth;

  double operator()(double d) const {
    if (space == AlignmentSpace::Depth) return scale * d + shift;
    return 1.0 / (scale / d + shift);
  }
};

struct DepthPair {
  double pred = 0.0;
  double sfm = 0.0;
};

namespace detail {

inline void require_pairs(const std::vector<DepthPair>& pairs) {
  if (pairs.size() < 2) {
    fail(ErrorCode::TooFewSamples, std::to_string(pairs.size()) + " pair(s), need 2");
  }
  const double p0 = pairs.front().pred;
  if (std::all_of(pairs.begin(), pairs.end(), [&](const DepthPair& p) { return p.pred == p0; })) {
    fail(ErrorCode::DegenerateSamples, "all predicted depths are equal");
  }
}

inline std::vector<DepthPair> to_space(const std::vector<DepthPair>& pairs, AlignmentSpace space) {
  if (space == AlignmentSpace::Depth) return pairs;
  std::vector<DepthPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({1.0 / p.pred, 1.0 / p.sfm});
  return out;
}

struct LineFit {
  double scale;
  double shift;
  bool ok;
};

// Centered normal equations; ok = false when the sources have zero spread.
template <typename Pred>
LineFit least_squares_line(const std::vector<DepthPair>& pairs, Pred&& include) {
  double sp = 0.0;
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!include(i)) continue;
    sp += pairs[i].pred;
    ss += pairs[i].sfm;
    ++n;
  }
  if (n < 2) return {0.0, 0.0, false};
  const double mp = sp / static_cast<double>(n);
  const double ms = ss / static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!include(i)) continue;
    const double dx = pairs[i].pred - mp;
    sxy += dx * (pairs[i].sfm - ms);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) return {0.0, 0.0, false};
  const double scale = sxy / sxx;
  return {scale, ms - scale * mp, true};
}

inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::size_t count_inliers(const std::vector<DepthPair>& pairs, double scale, double shift,
                                 double threshold) {
  std::size_t n = 0;
  for (const auto& p : pairs) n += std::abs(scale * p.pred + shift - p.sfm) < threshold ? 1 : 0;
  return n;
}

}  // namespace detail

/// Absolute inlier threshold implied by the config for these pairs, in the
/// fitting space.
inline double resolve_threshold(const std::vector<DepthPair>& pairs_in_space,
                                const AlignmentConfig& cfg) {
  if (cfg.threshold_mode == ThresholdMode::Absolute) return cfg.threshold;
  std::vector<double> targets;
  targets.reserve(pairs_in_space.size());
  for (const auto& p : pairs_in_space) targets.push_back(std::abs(p.sfm));
  return cfg.threshold * detail::median_of(std::move(targets));
}

/// Ordinary least squares of sfm on pred.
inline AffineDepthModel fit_least_squares(const std::vector<DepthPair>& pairs,
                                          AlignmentSpace space = AlignmentSpace::Depth) {
  detail::require_pairs(pairs);
  const auto fitted = detail::to_space(pairs, space);
  const auto line = detail::least_squares_line(fitted, [](std::size_t) { return true; });
  if (!line.ok) fail(ErrorCode::DegenerateSamples, "zero spread in predicted depth");
  if (!(line.scale > 0.0)) {
    fail(ErrorCode::NoPositiveScaleModel, "least-squares scale " + std::to_string(line.scale));
  }
  return {line.scale, line.shift, pairs.size(), 0.0, space};
}

/// Two-point RANSAC over scale and shift with a least-squares refit on the
/// winning consensus set. When the number of distinct sample pairs does not
/// exceed the iteration budget, every pair is tried instead of sampling.
inline AffineDepthModel fit_ransac(const std::vector<DepthPair>& pairs, const AlignmentConfig& cfg) {
  cfg.validate();
  detail::require_pairs(pairs);
  const auto fitted = detail::to_space(pairs, cfg.space);
  const double threshold = resolve_threshold(fitted, cfg);
  const std::size_t n = fitted.size();

  bool found = false;
  double best_scale = 0.0;
  double best_shift = 0.0;
  std::size_t best_count = 0;

  auto try_sample = [&](std::size_t i, std::size_t j) {
    const auto& a = fitted[i];
    const auto& b = fitted[j];
    if (a.pred == b.pred) return;
    const double scale = (b.sfm - a.sfm) / (b.pred - a.pred);
    if (!(scale > 0.0) || !std::isfinite(scale)) return;
    const double shift = a.sfm - scale * a.pred;
    const std::size_t count = detail::count_inliers(fitted, scale, shift, threshold);
    if (!found || count > best_count) {
      found = true;
      best_scale = scale;
      best_shift = shift;
      best_count = count;
    }
  };

  const double total_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  if (total_pairs <= static_cast<double>(cfg.iterations)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) try_sample(i, j);
    }
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int it = 0; it < cfg.iterations; ++it) {
      const std::size_t i = pick(rng);
      std::size_t j = pick(rng);
      while (j == i) j = pick(rng);
      try_sample(i, j);
    }
  }
  if (!found) fail(ErrorCode::NoPositiveScaleModel, "no sample produced a positive scale");

  const auto refit = detail::least_squares_line(fitted, [&](std::size_t i) {
    return std::abs(best_scale * fitted[i].pred + best_shift - fitted[i].sfm) < threshold;
  });
  AffineDepthModel model{best_scale, best_shift, best_count, threshold, cfg.space};
  if (refit.ok && refit.scale > 0.0) {
    model.scale = refit.scale;
    model.shift = refit.shift;
  }
  return model;
}

/// Applies the model to every valid pixel; results that are not strictly
/// positive become invalid.
inline DenseDepthMap apply(const AffineDepthModel& model, const DenseDepthMap& depth) {
  if (depth.domain != ScaleDomain::Metric) fail(ErrorCode::DomainMismatch, "alignment needs metric depth");
  DenseDepthMap out = depth;
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    if (!out.is_valid(i)) continue;
    const double v = model(out.depth[i]);
    if (v > 0.0 && std::isfinite(v)) {
      out.depth[i] = v;
    } else {
      out.invalidate(i);
    }
  }
  return out;
}

/// (pred, sfm) pairs at valued sparse pixels where the prediction is valid,
/// in row-major order.
inline std::vector<DepthPair> gather_pairs(const DenseDepthMap& pred, const SparseDepthMap& sparse) {
  if (pred.width() != sparse.width() || pred.height() != sparse.height()) {
    fail(ErrorCode::ShapeMismatch, "prediction and sparse depth differ in size");
  }
  std::vector<DepthPair> pairs;
  for (std::size_t i = 0; i < pred.depth.size(); ++i) {
    if (sparse.has(i) && pred.is_valid(i) && pred.depth[i] > 0.0) {
      pairs.push_back({pred.depth[i], sparse.depth[i]});
    }
  }
  return pairs;
}

struct AlignmentResult {
  DenseDepthMap depth;
  AffineDepthModel model;
  std::size_t pair_count = 0;
};

inline AlignmentResult align_view(const DenseDepthMap& pred, const SparseDepthMap& sparse,
                                  const AlignmentConfig& cfg) {
  cfg.validate();
  if (pred.domain != ScaleDomain::Metric) fail(ErrorCode::DomainMismatch, "alignment needs metric depth");
  const auto pairs = gather_pairs(pred, sparse);
  AlignmentResult result;
  result.pair_count = pairs.size();
  switch (cfg.method) {
    case AlignmentMethod::NoAlignment:
      result.depth = pred;
      result.model = AffineDepthModel{1.0, 0.0, 0, 0.0, AlignmentSpace::Depth};
      return result;
    case AlignmentMethod::LeastSquare:
      result.model = fit_least_squares(pairs, cfg.space);
      break;
    case AlignmentMethod::Ransac:
      result.model = fit_ransac(pairs, cfg);
      break;
  }
  result.depth = apply(result.model, pred);
  return result;
}

}  // namespace sfmdepth
