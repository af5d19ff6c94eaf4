#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sfmdepth/conditioning.hpp"
#include "sfmdepth/depth_io.hpp"
#include "sfmdepth/depth_map.hpp"
#include "sfmdepth/sfm_model.hpp"

namespace sfmdepth {

struct ViewContext {
  ImageId image_id = 0;
  std::string name;
  int width = 0;
  int height = 0;
  std::optional<std::filesystem::path> rgb_path;
};

enum class ProviderKind {
  FromFiles,
  SyntheticOracle,
  Constant,
  /// Returns the densified conditioning depth itself (normalized domain): a
  /// stand-in estimator whose quality is exactly the conditioning quality.
  /// With k = 0 only the SfM pixels are valid.
  Conditioning,
};

struct OracleNoise {
  double sigma_mult = 0.0;
  double scale = 1.0;
  double shift = 0.0;
  std::uint64_t seed = 0;
};

struct ProviderSpec {
  ProviderKind kind = ProviderKind::SyntheticOracle;
  std::filesystem::path prediction_dir;
  OracleNoise noise{};
  double constant = 1.0;
  ScaleDomain constant_domain = ScaleDomain::Metric;
  /// Conditioning provider: pixels farther than this from any SfM pixel are
  /// reported invalid (needs the distance map). 0 disables the cut.
  double max_distance = 0.0;
  int ensemble_size = 1;

  void validate() const {
    if (noise.sigma_mult < 0.0) fail(ErrorCode::InvalidConfig, "sigma_mult must be >= 0");
    if (!(noise.scale > 0.0)) fail(ErrorCode::InvalidConfig, "oracle scale must be > 0");
    if (ensemble_size < 1) fail(ErrorCode::InvalidConfig, "ensemble_size must be >= 1");
    if (max_distance < 0.0) fail(ErrorCode::InvalidConfig, "max_distance must be >= 0");
  }
};

class DepthProvider {
 public:
  virtual ~DepthProvider() = default;

  /// One inference. `member` indexes the ensemble draw; deterministic
  /// providers ignore it.
  virtual DenseDepthMap predict(const ViewContext& view, const ConditioningBundle& bundle,
                                int member) const = 0;
};

class FileDepthProvider final : public DepthProvider {
 public:
  explicit FileDepthProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

  DenseDepthMap predict(const ViewContext& view, const ConditioningBundle&, int) const override {
    if (!std::filesystem::exists(io::depth_path(dir_, view.name)) ||
        !std::filesystem::exists(io::meta_path(dir_, view.name))) {
      fail(ErrorCode::MissingPrediction, view.name + " (image " + std::to_string(view.image_id) + ")");
    }
    return io::read_dense(dir_, view.name);
  }

 private:
  std::filesystem::path dir_;
};

/// gt * (1 + eps) * scale + shift with eps ~ N(0, sigma_mult^2) per pixel.
class SyntheticOracleProvider final : public DepthProvider {
 public:
  SyntheticOracleProvider(std::map<ImageId, DenseDepthMap> ground_truth, OracleNoise noise)
      : gt_(std::move(ground_truth)), noise_(noise) {}

  DenseDepthMap predict(const ViewContext& view, const ConditioningBundle&,
                        int member) const override {
    const auto it = gt_.find(view.image_id);
    if (it == gt_.end()) {
      fail(ErrorCode::NoGroundTruth, view.name + " (image " + std::to_string(view.image_id) + ")");
    }
    const DenseDepthMap& gt = it->second;
    DenseDepthMap out(gt.width(), gt.height(), ScaleDomain::Metric);
    std::seed_seq seq{static_cast<std::uint32_t>(noise_.seed), static_cast<std::uint32_t>(noise_.seed >> 32),
                      static_cast<std::uint32_t>(view.image_id), static_cast<std::uint32_t>(member)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < gt.depth.size(); ++i) {
      if (!gt.is_valid(i)) continue;
      const double eps = noise_.sigma_mult > 0.0 ? noise_.sigma_mult * normal(rng) : 0.0;
      const double v = gt.depth[i] * (1.0 + eps) * noise_.scale + noise_.shift;
      if (v > 0.0 && std::isfinite(v)) {
        out.depth[i] = v;
        out.valid[i] = 1;
      }
    }
    return out;
  }

 private:
  std::map<ImageId, DenseDepthMap> gt_;
  OracleNoise noise_;
};

class ConstantDepthProvider final : public DepthProvider {
 public:
  ConstantDepthProvider(double value, ScaleDomain domain) : value_(value), domain_(domain) {}

  DenseDepthMap predict(const ViewContext& view, const ConditioningBundle& bundle,
                        int) const override {
    const int w = bundle.densified_depth.empty() ? view.width : bundle.densified_depth.width();
    const int h = bundle.densified_depth.empty() ? view.height : bundle.densified_depth.height();
    DenseDepthMap out(w, h, domain_);
    std::fill(out.depth.values().begin(), out.depth.values().end(), value_);
    std::fill(out.valid.values().begin(), out.valid.values().end(), std::uint8_t{1});
    return out;
  }

 private:
  double value_;
  ScaleDomain domain_;
};

class ConditioningDepthProvider final : public DepthProvider {
 public:
  explicit ConditioningDepthProvider(double max_distance) : max_distance_(max_distance) {}

  DenseDepthMap predict(const ViewContext&, const ConditioningBundle& bundle, int) const override {
    const auto& src = bundle.densified_depth;
    DenseDepthMap out(src.width(), src.height(), ScaleDomain::Normalized);
    const bool sparse_only = bundle.k_used == 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (sparse_only && !bundle.trimmed.has(i)) continue;
      if (max_distance_ > 0.0 && bundle.distance_map && (*bundle.distance_map)[i] > max_distance_) {
        continue;
      }
      out.depth[i] = src[i];
      out.valid[i] = 1;
    }
    return out;
  }

 private:
  double max_distance_;
};

/// Ground truth is only consulted by the synthetic oracle.
inline std::unique_ptr<DepthProvider> make_provider(const ProviderSpec& spec,
                                                    std::map<ImageId, DenseDepthMap> ground_truth = {}) {
  spec.validate();
  switch (spec.kind) {
    case ProviderKind::FromFiles:
      return std::make_unique<FileDepthProvider>(spec.prediction_dir);
    case ProviderKind::SyntheticOracle:
      return std::make_unique<SyntheticOracleProvider>(std::move(ground_truth), spec.noise);
    case ProviderKind::Constant:
      return std::make_unique<ConstantDepthProvider>(spec.constant, spec.constant_domain);
    case ProviderKind::Conditioning:
      return std::make_unique<ConditioningDepthProvider>(spec.max_distance);
  }
  fail(ErrorCode::InvalidConfig, "unknown provider kind");
}

/// Pixel-wise median across ensemble members. A pixel survives when valid in
/// at least ceil(n/2) inputs; an even count of valid values takes the mean of
/// the two central ones.
inline DenseDepthMap ensemble_median(const std::vector<DenseDepthMap>& maps) {
  if (maps.empty()) fail(ErrorCode::ShapeMismatch, "ensemble needs at least one map");
  const auto& first = maps.front();
  for (const auto& m : maps) {
    if (m.width() != first.width() || m.height() != first.height()) {
      fail(ErrorCode::ShapeMismatch, "ensemble members differ in size");
    }
    if (m.domain != first.domain) fail(ErrorCode::DomainMismatch, "ensemble mixes scale domains");
  }
  const std::size_t n = maps.size();
  const std::size_t quorum = (n + 1) / 2;
  DenseDepthMap out(first.width(), first.height(), first.domain);
  std::vector<double> values;
  values.reserve(n);
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    values.clear();
    for (const auto& m : maps) {
      if (m.is_valid(i)) values.push_back(m.depth[i]);
    }
    if (values.empty() || values.size() < quorum) continue;
    std::sort(values.begin(), values.end());
    const std::size_t c = values.size();
    out.depth[i] = (c % 2 == 1) ? values[c / 2] : 0.5 * (values[c / 2 - 1] + values[c / 2]);
    out.valid[i] = 1;
  }
  return out;
}

/// Runs `ensemble_size` inferences and combines them by median.
inline DenseDepthMap predict_ensemble(const DepthProvider& provider, const ViewContext& view,
                                      const ConditioningBundle& bundle, int ensemble_size) {
  std::vector<DenseDepthMap> members;
  members.reserve(static_cast<std::size_t>(ensemble_size));
  for (int m = 0; m < ensemble_size; ++m) members.push_back(provider.predict(view, bundle, m));
  if (members.size() == 1) return std::move(members.front());
  return ensemble_median(members);
}

}  // namespace sfmdepth
