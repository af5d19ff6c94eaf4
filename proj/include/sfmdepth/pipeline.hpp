#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "sfmdepth/alignment.hpp"
#include "sfmdepth/conditioning.hpp"
#include "sfmdepth/depth_io.hpp"
#include "sfmdepth/depth_provider.hpp"
#include "sfmdepth/evaluation.hpp"
#include "sfmdepth/geometry.hpp"
#include "sfmdepth/mesh.hpp"
#include "sfmdepth/parallel.hpp"
#include "sfmdepth/point_fusion.hpp"
#include "sfmdepth/sfm_io.hpp"
#include "sfmdepth/tsdf.hpp"

namespace sfmdepth {

enum class FusionMode { Tsdf, PointCloud };

struct PathsConfig {
  std::filesystem::path sfm_dir;
  std::filesystem::path image_dir;
  std::filesystem::path prediction_dir;
  std::filesystem::path output_dir = "output";
  /// Holds gt_mesh.ply and gt_depth/ (synthetic oracle, evaluation).
  std::filesystem::path gt_dir;
};

struct ProjectionConfig {
  bool use_visibility = true;
  SplatMode splat = SplatMode::Observed;
};

struct FusionConfig {
  FusionMode mode = FusionMode::Tsdf;
  std::size_t voxel_budget = 128 * 128 * 128;
  double truncation_factor = kDefaultTruncationFactor;
  int max_weight = kDefaultMaxWeight;
  /// Unset: trimmed bounding box of the SfM points.
  std::optional<VolumeBounds> bounds;
  ConsistencyParams consistency{};
};

struct EvaluationConfig {
  bool enabled = true;
  double tau = kDefaultFscoreThreshold;
  std::size_t sample_count = 100000;
  MetricBounds bounds{};
};

struct PipelineConfig {
  PathsConfig paths;
  std::vector<std::string> views;  // image names; empty selects all
  unsigned workers = 0;
  std::uint64_t seed = 0;
  ProjectionConfig projection;
  ConditioningOptions conditioning;
  ProviderSpec provider;
  AlignmentConfig alignment;
  FusionConfig fusion;
  EvaluationConfig evaluation;

  void validate() const {
    if (conditioning.k < 0) fail(ErrorCode::InvalidConfig, "conditioning.k must be >= 0");
    if (!(conditioning.trim_fraction >= 0.0 && conditioning.trim_fraction < 0.5)) {
      fail(ErrorCode::InvalidConfig, "conditioning.trim_fraction must lie in [0, 0.5)");
    }
    if (!(conditioning.expansion.low > 0.0 && conditioning.expansion.low <= 1.0 &&
          conditioning.expansion.high >= 1.0)) {
      fail(ErrorCode::InvalidConfig, "conditioning.expansion must satisfy 0 < low <= 1 <= high");
    }
    provider.validate();
    alignment.validate();
    if (fusion.voxel_budget < 8) fail(ErrorCode::InvalidConfig, "fusion.voxel_budget must be >= 8");
    if (!(fusion.truncation_factor >= 1.0)) fail(ErrorCode::InvalidConfig, "fusion.truncation_factor must be >= 1");
    if (fusion.max_weight < 1) fail(ErrorCode::InvalidConfig, "fusion.max_weight must be >= 1");
    if (fusion.bounds && !((fusion.bounds->max - fusion.bounds->min).minCoeff() > 0.0)) {
      fail(ErrorCode::InvalidConfig, "fusion.bounds must have positive extent");
    }
    if (fusion.consistency.n_views < 0 || !(fusion.consistency.pixel_tol >= 0.0) ||
        !(fusion.consistency.depth_tol >= 0.0)) {
      fail(ErrorCode::InvalidConfig, "fusion.consistency values must be >= 0");
    }
    if (!(evaluation.tau > 0.0)) fail(ErrorCode::InvalidConfig, "evaluation.tau must be > 0");
    if (evaluation.sample_count < 1) fail(ErrorCode::InvalidConfig, "evaluation.sample_count must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace config_detail {


inline void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(ErrorCode::InvalidConfig, "unknown key " + where + "." + key);
  }
}

template <typename T>
void get(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    fail(ErrorCode::InvalidConfig, where + "." + key + " has the wrong type");
  }
}

inline std::string get_string(const Json& j, const char* key, const std::string& fallback, const std::string& where) {
  std::string s = fallback;
  get(j, key, s, where);
  return s;
}

inline Eigen::Vector3d vec3(const Json& j, const std::string& where) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const Json::exception&) {
    fail(ErrorCode::InvalidConfig, where + " must be a list of numbers");
  }
  if (v.size() != 3) fail(ErrorCode::InvalidConfig, where + " needs 3 values");
  return {v[0], v[1], v[2]};
}

}  // namespace config_detail

inline ProviderKind parse_provider_kind(const std::string& s) {
  if (s == "from_files") return ProviderKind::FromFiles;
  if (s == "synthetic_oracle") return ProviderKind::SyntheticOracle;
  if (s == "constant") return ProviderKind::Constant;
  if (s == "conditioning") return ProviderKind::Conditioning;
  fail(ErrorCode::InvalidConfig, "unknown provider kind '" + s + "'");
}

inline std::string to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::FromFiles: return "from_files";
    case ProviderKind::SyntheticOracle: return "synthetic_oracle";
    case ProviderKind::Constant: return "constant";
    case ProviderKind::Conditioning: return "conditioning";
  }
  return "?";
}

inline AlignmentMethod parse_alignment_method(const std::string& s) {
  if (s == "ransac") return AlignmentMethod::Ransac;
  if (s == "least_square") return AlignmentMethod::LeastSquare;
  if (s == "none") return AlignmentMethod::NoAlignment;
  fail(ErrorCode::InvalidConfig, "unknown alignment method '" + s + "'");
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "tsdf") return FusionMode::Tsdf;
  if (s == "point_cloud") return FusionMode::PointCloud;
  fail(ErrorCode::InvalidConfig, "unknown fusion mode '" + s + "'");
}

/// Overlays `j` onto `cfg`; keys absent from `j` keep their current values.
inline void apply_config_json(PipelineConfig& cfg, const Json& j) {
  using namespace config_detail;
  check_keys(j, "config", {"paths", "views", "workers", "seed", "projection", "conditioning", "provider",
                           "alignment", "fusion", "evaluation"});
  if (j.contains("paths")) {
    const Json& p = j["paths"];
    check_keys(p, "paths", {"sfm_dir", "image_dir", "prediction_dir", "output_dir", "gt_dir"});
    auto path = [&](const char* key, std::filesystem::path& out) {
      if (p.contains(key)) out = get_string(p, key, "", "paths");
    };
    path("sfm_dir", cfg.paths.sfm_dir);
    path("image_dir", cfg.paths.image_dir);
    path("prediction_dir", cfg.paths.prediction_dir);
    path("output_dir", cfg.paths.output_dir);
    path("gt_dir", cfg.paths.gt_dir);
  }
  get(j, "views", cfg.views, "config");
  get(j, "workers", cfg.workers, "config");
  get(j, "seed", cfg.seed, "config");
  if (j.contains("projection")) {
    const Json& p = j["projection"];
    check_keys(p, "projection", {"use_visibility", "splat"});
    get(p, "use_visibility", cfg.projection.use_visibility, "projection");
    const auto splat = get_string(p, "splat", cfg.projection.splat == SplatMode::Observed ? "observed" : "reprojected",
                                  "projection");
    if (splat != "observed" && splat != "reprojected") fail(ErrorCode::InvalidConfig, "projection.splat: " + splat);
    cfg.projection.splat = splat == "observed" ? SplatMode::Observed : SplatMode::Reprojected;
  }
  if (j.contains("conditioning")) {
    const Json& c = j["conditioning"];
    check_keys(c, "conditioning", {"k", "trim_fraction", "expansion", "distance_map", "distance_map_pre_trim"});
    get(c, "k", cfg.conditioning.k, "conditioning");
    get(c, "trim_fraction", cfg.conditioning.trim_fraction, "conditioning");
    if (c.contains("expansion")) {
      std::vector<double> e;
      get(c, "expansion", e, "conditioning");
      if (e.size() != 2) fail(ErrorCode::InvalidConfig, "conditioning.expansion needs [low, high]");
      cfg.conditioning.expansion = {e[0], e[1]};
    }
    get(c, "distance_map", cfg.conditioning.use_distance_map, "conditioning");
    get(c, "distance_map_pre_trim", cfg.conditioning.distance_map_pre_trim, "conditioning");
  }
  if (j.contains("provider")) {
    const Json& p = j["provider"];
    check_keys(p, "provider", {"kind", "prediction_dir", "sigma_mult", "scale", "shift", "constant",
                               "constant_domain", "max_distance", "ensemble_size"});
    if (p.contains("kind")) cfg.provider.kind = parse_provider_kind(get_string(p, "kind", "", "provider"));
    if (p.contains("prediction_dir")) cfg.paths.prediction_dir = get_string(p, "prediction_dir", "", "provider");
    get(p, "sigma_mult", cfg.provider.noise.sigma_mult, "provider");
    get(p, "scale", cfg.provider.noise.scale, "provider");
    get(p, "shift", cfg.provider.noise.shift, "provider");
    get(p, "constant", cfg.provider.constant, "provider");
    if (p.contains("constant_domain")) {
      try {
        cfg.provider.constant_domain = parse_scale_domain(get_string(p, "constant_domain", "", "provider"));
      } catch (const Error& e) {
        fail(ErrorCode::InvalidConfig, e.what());
      }
    }
    get(p, "max_distance", cfg.provider.max_distance, "provider");
    get(p, "ensemble_size", cfg.provider.ensemble_size, "provider");
  }
  if (j.contains("alignment")) {
    const Json& a = j["alignment"];
    check_keys(a, "alignment", {"method", "iterations", "threshold", "threshold_mode", "space"});
    if (a.contains("method")) cfg.alignment.method = parse_alignment_method(get_string(a, "method", "", "alignment"));
    get(a, "iterations", cfg.alignment.iterations, "alignment");
    get(a, "threshold", cfg.alignment.threshold, "alignment");
    if (a.contains("threshold_mode")) {
      const auto m = get_string(a, "threshold_mode", "", "alignment");
      if (m != "relative" && m != "absolute") fail(ErrorCode::InvalidConfig, "alignment.threshold_mode: " + m);
      cfg.alignment.threshold_mode = m == "relative" ? ThresholdMode::RelativeToMedian : ThresholdMode::Absolute;
    }
    if (a.contains("space")) {
      const auto s = get_string(a, "space", "", "alignment");
      if (s != "depth" && s != "inverse_depth") fail(ErrorCode::InvalidConfig, "alignment.space: " + s);
      cfg.alignment.space = s == "depth" ? AlignmentSpace::Depth : AlignmentSpace::InverseDepth;
    }
  }
  if (j.contains("fusion")) {
    const Json& f = j["fusion"];
    check_keys(f, "fusion", {"mode", "voxel_budget", "truncation_factor", "max_weight", "bounds", "consistency"});
    if (f.contains("mode")) cfg.fusion.mode = parse_fusion_mode(get_string(f, "mode", "", "fusion"));
    get(f, "voxel_budget", cfg.fusion.voxel_budget, "fusion");
    get(f, "truncation_factor", cfg.fusion.truncation_factor, "fusion");
    get(f, "max_weight", cfg.fusion.max_weight, "fusion");
    if (f.contains("bounds")) {
      if (f["bounds"].is_null()) {
        cfg.fusion.bounds.reset();
      } else {
        check_keys(f["bounds"], "fusion.bounds", {"min", "max"});
        if (!f["bounds"].contains("min") || !f["bounds"].contains("max")) {
          fail(ErrorCode::InvalidConfig, "fusion.bounds needs min and max");
        }
        cfg.fusion.bounds = VolumeBounds{vec3(f["bounds"]["min"], "fusion.bounds.min"),
                                         vec3(f["bounds"]["max"], "fusion.bounds.max")};
      }
    }
    if (f.contains("consistency")) {
      const Json& c = f["consistency"];
      check_keys(c, "fusion.consistency", {"n_views", "pixel_tol", "depth_tol"});
      get(c, "n_views", cfg.fusion.consistency.n_views, "fusion.consistency");
      get(c, "pixel_tol", cfg.fusion.consistency.pixel_tol, "fusion.consistency");
      get(c, "depth_tol", cfg.fusion.consistency.depth_tol, "fusion.consistency");
    }
  }
  if (j.contains("evaluation")) {
    const Json& e = j["evaluation"];
    check_keys(e, "evaluation", {"enabled", "tau", "sample_count", "bounds"});
    get(e, "enabled", cfg.evaluation.enabled, "evaluation");
    get(e, "tau", cfg.evaluation.tau, "evaluation");
    get(e, "sample_count", cfg.evaluation.sample_count, "evaluation");
    if (e.contains("bounds")) {
      const Json& b = e["bounds"];
      check_keys(b, "evaluation.bounds", {"chamfer_max", "fscore_min", "depth_rmse_max"});
      auto opt = [&](const char* key, std::optional<double>& out) {
        if (!b.contains(key)) return;
        if (b[key].is_null()) {
          out.reset();
          return;
        }
        double v = 0.0;
        get(b, key, v, "evaluation.bounds");
        out = v;
      };
      opt("chamfer_max", cfg.evaluation.bounds.chamfer_max);
      opt("fscore_min", cfg.evaluation.bounds.fscore_min);
      opt("depth_rmse_max", cfg.evaluation.bounds.depth_rmse_max);
    }
  }
}

inline Json config_to_json(const PipelineConfig& cfg) {
  Json j;
  j["paths"] = {{"sfm_dir", cfg.paths.sfm_dir.string()},
                {"image_dir", cfg.paths.image_dir.string()},
                {"prediction_dir", cfg.paths.prediction_dir.string()},
                {"output_dir", cfg.paths.output_dir.string()},
                {"gt_dir", cfg.paths.gt_dir.string()}};
  j["views"] = cfg.views;
  j["workers"] = cfg.workers;
  j["seed"] = cfg.seed;
  j["projection"] = {{"use_visibility", cfg.projection.use_visibility},
                     {"splat", cfg.projection.splat == SplatMode::Observed ? "observed" : "reprojected"}};
  j["conditioning"] = {{"k", cfg.conditioning.k},
                       {"trim_fraction", cfg.conditioning.trim_fraction},
                       {"expansion", {cfg.conditioning.expansion.low, cfg.conditioning.expansion.high}},
                       {"distance_map", cfg.conditioning.use_distance_map},
                       {"distance_map_pre_trim", cfg.conditioning.distance_map_pre_trim}};
  j["provider"] = {{"kind", to_string(cfg.provider.kind)},
                   {"sigma_mult", cfg.provider.noise.sigma_mult},
                   {"scale", cfg.provider.noise.scale},
                   {"shift", cfg.provider.noise.shift},
                   {"constant", cfg.provider.constant},
                   {"constant_domain", std::string(to_string(cfg.provider.constant_domain))},
                   {"max_distance", cfg.provider.max_distance},
                   {"ensemble_size", cfg.provider.ensemble_size}};
  j["alignment"] = {{"method", std::string(to_string(cfg.alignment.method))},
                    {"iterations", cfg.alignment.iterations},
                    {"threshold", cfg.alignment.threshold},
                    {"threshold_mode", cfg.alignment.threshold_mode == ThresholdMode::RelativeToMedian ? "relative"
                                                                                                        : "absolute"},
                    {"space", cfg.alignment.space == AlignmentSpace::Depth ? "depth" : "inverse_depth"}};
  Json fusion{{"mode", cfg.fusion.mode == FusionMode::Tsdf ? "tsdf" : "point_cloud"},
                  {"voxel_budget", cfg.fusion.voxel_budget},
                  {"truncation_factor", cfg.fusion.truncation_factor},
                  {"max_weight", cfg.fusion.max_weight},
                  {"consistency",
                   {{"n_views", cfg.fusion.consistency.n_views},
                    {"pixel_tol", cfg.fusion.consistency.pixel_tol},
                    {"depth_tol", cfg.fusion.consistency.depth_tol}}}};
  if (cfg.fusion.bounds) {
    const auto& b = *cfg.fusion.bounds;
    fusion["bounds"] = {{"min", {b.min.x(), b.min.y(), b.min.z()}}, {"max", {b.max.x(), b.max.y(), b.max.z()}}};
  } else {
    fusion["bounds"] = nullptr;
  }
  j["fusion"] = fusion;
  Json bounds = Json::object();
  if (cfg.evaluation.bounds.chamfer_max) bounds["chamfer_max"] = *cfg.evaluation.bounds.chamfer_max;
  if (cfg.evaluation.bounds.fscore_min) bounds["fscore_min"] = *cfg.evaluation.bounds.fscore_min;
  if (cfg.evaluation.bounds.depth_rmse_max) bounds["depth_rmse_max"] = *cfg.evaluation.bounds.depth_rmse_max;
  j["evaluation"] = {{"enabled", cfg.evaluation.enabled},
                     {"tau", cfg.evaluation.tau},
                     {"sample_count", cfg.evaluation.sample_count},
                     {"bounds", bounds}};
  return j;
}

/// Path-only environment overrides.
inline void apply_env_overrides(PipelineConfig& cfg) {
  auto env = [](const char* name, std::filesystem::path& out) {
    if (const char* v = std::getenv(name); v != nullptr && *v != '\0') out = v;
  };
  env("SFMDEPTH_SFM_DIR", cfg.paths.sfm_dir);
  env("SFMDEPTH_IMAGE_DIR", cfg.paths.image_dir);
  env("SFMDEPTH_PRED_DIR", cfg.paths.prediction_dir);
  env("SFMDEPTH_OUTPUT_DIR", cfg.paths.output_dir);
  env("SFMDEPTH_GT_DIR", cfg.paths.gt_dir);
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  Json j;
  try {
    j = io::read_json(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MissingFile) throw;
    fail(ErrorCode::InvalidConfig, e.what());
  }
  apply_config_json(cfg, j);
  return cfg;
}

// ---------------------------------------------------------------------------
// Output layout

namespace layout {
inline std::filesystem::path sparse_dir(const PipelineConfig& c) { return c.paths.output_dir / "sparse_depth"; }
inline std::filesystem::path conditioning_dir(const PipelineConfig& c) { return c.paths.output_dir / "conditioning"; }
inline std::filesystem::path prediction_dir(const PipelineConfig& c) { return c.paths.output_dir / "predictions"; }
inline std::filesystem::path aligned_dir(const PipelineConfig& c) { return c.paths.output_dir / "aligned"; }
inline std::filesystem::path mesh_path(const PipelineConfig& c) { return c.paths.output_dir / "mesh.ply"; }
inline std::filesystem::path cloud_path(const PipelineConfig& c) { return c.paths.output_dir / "points.ply"; }
inline std::filesystem::path alignment_log(const PipelineConfig& c) { return c.paths.output_dir / "alignment_log.json"; }
inline std::filesystem::path metrics_json(const PipelineConfig& c) { return c.paths.output_dir / "metrics.json"; }
inline std::filesystem::path metrics_table(const PipelineConfig& c) { return c.paths.output_dir / "metrics.txt"; }
inline std::filesystem::path run_log(const PipelineConfig& c) { return c.paths.output_dir / "run_log.json"; }
inline std::filesystem::path gt_mesh(const PipelineConfig& c) { return c.paths.gt_dir / "gt_mesh.ply"; }
inline std::filesystem::path gt_depth_dir(const PipelineConfig& c) { return c.paths.gt_dir / "gt_depth"; }
}  // namespace layout

// ---------------------------------------------------------------------------
// Stages. Each returns what the matching subcommand writes, already rounded
// to the float32 precision of the files, so chaining stages through disk and
// running them in memory agree.

/// Rethrows a stage failure with stage and view attribution; the code is kept.
template <typename F>
auto with_context(const std::string& stage, const std::string& view, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    std::string where = stage;
    if (!view.empty()) where += " [" + view + "]";
    throw Error(e.code(), where + ": " + e.what());
  }
}

inline std::vector<ImageId> select_views(const SfmModel& model, const std::vector<std::string>& names) {
  std::vector<ImageId> ids;
  if (names.empty()) {
    for (const auto& [id, img] : model.images) ids.push_back(id);
    return ids;
  }
  std::set<ImageId> chosen;
  for (const auto& n : names) {
    const auto id = model.find_image_by_name(n);
    if (!id) fail(ErrorCode::UnknownImage, n);
    chosen.insert(*id);
  }
  return {chosen.begin(), chosen.end()};
}

inline ViewContext view_context(const SfmModel& model, ImageId id, const PipelineConfig& cfg) {
  const PosedImage& img = model.image(id);
  const CameraIntrinsics& cam = model.camera_of(img);
  ViewContext v{id, img.name, cam.width, cam.height, std::nullopt};
  if (!cfg.paths.image_dir.empty()) v.rgb_path = cfg.paths.image_dir / img.name;
  return v;
}

inline SparseDepthMap stage_project(const SfmModel& model, ImageId id, const PipelineConfig& cfg) {
  return quantize_f32(render_sparse_depth(model, id, cfg.projection.use_visibility, cfg.projection.splat));
}

inline ConditioningBundle stage_condition(const SparseDepthMap& sparse, const PipelineConfig& cfg) {
  ConditioningBundle b = build_conditioning(sparse, cfg.conditioning);
  b.densified_depth = quantize_f32(std::move(b.densified_depth));
  if (b.distance_map) b.distance_map = quantize_f32(std::move(*b.distance_map));
  return b;
}

/// Provider output brought to metric depth through the view's range.
inline DenseDepthMap stage_predict(const DepthProvider& provider, const ViewContext& view,
                                   const ConditioningBundle& bundle, const PipelineConfig& cfg) {
  DenseDepthMap pred = predict_ensemble(provider, view, bundle, cfg.provider.ensemble_size);
  if (pred.width() != view.width || pred.height() != view.height) {
    fail(ErrorCode::ShapeMismatch, "prediction is " + std::to_string(pred.width()) + "x" +
                                       std::to_string(pred.height()) + ", view is " + std::to_string(view.width) +
                                       "x" + std::to_string(view.height));
  }
  if (pred.domain == ScaleDomain::Normalized) pred = denormalize(pred, bundle.range);
  return quantize_f32(std::move(pred));
}

inline AlignmentResult stage_align(const DenseDepthMap& pred, const ConditioningBundle& bundle,
                                   const PipelineConfig& cfg) {
  AlignmentConfig a = cfg.alignment;
  a.seed = cfg.seed;
  AlignmentResult r = align_view(pred, bundle.trimmed, a);
  r.depth = quantize_f32(std::move(r.depth));
  return r;
}

using FusionOutput = std::variant<TriangleMesh, FusedPointCloud>;

inline FusionOutput stage_fuse(const std::vector<ViewDepth>& views, const SfmModel& model,
                               const PipelineConfig& cfg) {
  if (views.empty()) fail(ErrorCode::TooFewViews, "no views to fuse");
  if (cfg.fusion.mode == FusionMode::PointCloud) return fuse_point_cloud(views, model, cfg.fusion.consistency);
  const VolumeBounds bounds = cfg.fusion.bounds ? *cfg.fusion.bounds : auto_bounds(model);
  TsdfVolume volume = make_volume(bounds, cfg.fusion.voxel_budget, cfg.fusion.truncation_factor);
  for (const auto& v : views) {
    const PosedImage& img = model.image(v.image_id);
    with_context("fuse", img.name, [&] {
      integrate_in_place(volume, v.depth, model.camera_of(img), img, cfg.fusion.max_weight);
    });
  }
  TriangleMesh mesh = extract_mesh(volume);
  compute_vertex_normals(mesh);
  return mesh;
}

inline bool fusion_empty(const FusionOutput& out) {
  if (const auto* mesh = std::get_if<TriangleMesh>(&out)) return mesh->empty();
  return std::get<FusedPointCloud>(out).points.empty();
}

inline PointSet fusion_points(const FusionOutput& out, std::size_t samples, std::uint64_t seed) {
  if (const auto* mesh = std::get_if<TriangleMesh>(&out)) return sample_mesh(*mesh, samples, seed);
  return std::get<FusedPointCloud>(out).positions();
}

/// Geometry metrics against the reference mesh plus per-view depth RMSE when
/// reference depth maps are given.
inline MetricsReport stage_evaluate(const FusionOutput& out, const TriangleMesh& gt_mesh,
                                    const std::map<std::string, DenseDepthMap>& aligned_by_name,
                                    const std::map<std::string, DenseDepthMap>& gt_by_name,
                                    const PipelineConfig& cfg) {
  MetricsReport report;
  // Distinct stream so the two meshes are not sampled with the same draws.
  const PointSet gt = sample_mesh(gt_mesh, cfg.evaluation.sample_count, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  if (fusion_empty(out)) {
    report.empty_reconstruction = true;
    report.fscore = FscoreResult{};
    report.threshold = cfg.evaluation.tau;
    report.gt_samples = gt.size();
  } else {
    evaluate_geometry(fusion_points(out, cfg.evaluation.sample_count, cfg.seed), gt, cfg.evaluation.tau, report);
  }
  double sq = 0.0;
  std::size_t px = 0;
  for (const auto& [name, depth] : aligned_by_name) {
    const auto it = gt_by_name.find(name);
    if (it == gt_by_name.end()) continue;
    RmseResult r;
    try {
      r = depth_rmse_detail(depth, it->second);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoOverlap) throw;
      continue;
    }
    report.per_view.push_back({name, r.rmse, r.pixels});
    sq += r.rmse * r.rmse * static_cast<double>(r.pixels);
    px += r.pixels;
  }
  if (px > 0) {
    report.depth_rmse = std::sqrt(sq / static_cast<double>(px));
    report.depth_pixels = px;
  }
  return report;
}

inline Json alignment_entry(const std::string& name, const AlignmentResult& r, AlignmentMethod method) {
  return {{"image", name},
          {"method", std::string(to_string(method))},
          {"scale", r.model.scale},
          {"shift", r.model.shift},
          {"inliers", r.model.inlier_count},
          {"inlier_threshold", r.model.inlier_threshold},
          {"pairs", r.pair_count},
          {"space", r.model.space == AlignmentSpace::Depth ? "depth" : "inverse_depth"}};
}

inline std::map<ImageId, DenseDepthMap> load_gt_depths(const SfmModel& model, const std::vector<ImageId>& ids,
                                                       const PipelineConfig& cfg) {
  std::map<ImageId, DenseDepthMap> out;
  if (cfg.paths.gt_dir.empty()) return out;
  for (ImageId id : ids) {
    const auto& name = model.image(id).name;
    const auto dir = layout::gt_depth_dir(cfg);
    if (std::filesystem::exists(io::depth_path(dir, name))) out.emplace(id, io::read_dense(dir, name));
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-shot run

struct ViewTiming {
  std::string image;
  double project_s = 0.0;
  double condition_s = 0.0;
  double predict_s = 0.0;
  double align_s = 0.0;
};

struct ReconstructionResult {
  std::vector<ImageId> view_ids;
  std::map<ImageId, SparseDepthMap> sparse;
  std::map<ImageId, ConditioningBundle> bundles;
  std::map<ImageId, DenseDepthMap> predictions;
  std::map<ImageId, AlignmentResult> aligned;
  FusionOutput fused;
  std::optional<MetricsReport> metrics;
  std::vector<std::string> violations;
  std::vector<ViewTiming> timings;
  double fuse_s = 0.0;
  double evaluate_s = 0.0;
};

/// provider -> ensemble -> denormalize -> align -> fuse -> evaluate. Views run
/// on a bounded worker pool; fusion consumes them in image-id order.
inline ReconstructionResult reconstruct(const SfmModel& model, const PipelineConfig& cfg,
                                        const std::map<ImageId, DenseDepthMap>& gt_depths = {},
                                        const TriangleMesh* gt_mesh = nullptr) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::time_point a) { return std::chrono::duration<double>(Clock::now() - a).count(); };

  ReconstructionResult res;
  res.view_ids = select_views(model, cfg.views);
  ProviderSpec pspec = cfg.provider;
  pspec.noise.seed = cfg.seed;
  pspec.prediction_dir = cfg.paths.prediction_dir;
  const auto provider = make_provider(pspec, gt_depths);

  const std::size_t n = res.view_ids.size();
  std::vector<SparseDepthMap> sparse(n);
  std::vector<ConditioningBundle> bundles(n);
  std::vector<DenseDepthMap> preds(n);
  std::vector<AlignmentResult> aligned(n);
  res.timings.resize(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const ImageId id = res.view_ids[i];
        const ViewContext view = view_context(model, id, cfg);
        res.timings[i].image = view.name;
        auto t = Clock::now();
        sparse[i] = with_context("project", view.name, [&] { return stage_project(model, id, cfg); });
        res.timings[i].project_s = seconds(t);
        t = Clock::now();
        bundles[i] = with_context("condition", view.name, [&] { return stage_condition(sparse[i], cfg); });
        res.timings[i].condition_s = seconds(t);
        t = Clock::now();
        preds[i] = with_context("predict", view.name, [&] { return stage_predict(*provider, view, bundles[i], cfg); });
        res.timings[i].predict_s = seconds(t);
        t = Clock::now();
        aligned[i] = with_context("align", view.name, [&] { return stage_align(preds[i], bundles[i], cfg); });
        res.timings[i].align_s = seconds(t);
      },
      cfg.workers);

  std::vector<ViewDepth> views;
  for (std::size_t i = 0; i < n; ++i) views.push_back({res.view_ids[i], aligned[i].depth});
  auto t = Clock::now();
  res.fused = with_context("fuse", "", [&] { return stage_fuse(views, model, cfg); });
  res.fuse_s = seconds(t);

  if (gt_mesh != nullptr && cfg.evaluation.enabled) {
    t = Clock::now();
    std::map<std::string, DenseDepthMap> pred_by_name;
    std::map<std::string, DenseDepthMap> gt_by_name;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& name = model.image(res.view_ids[i]).name;
      pred_by_name.emplace(name, aligned[i].depth);
      if (auto it = gt_depths.find(res.view_ids[i]); it != gt_depths.end()) gt_by_name.emplace(name, it->second);
    }
    res.metrics = with_context("evaluate", "",
                               [&] { return stage_evaluate(res.fused, *gt_mesh, pred_by_name, gt_by_name, cfg); });
    res.violations = check_bounds(*res.metrics, cfg.evaluation.bounds);
    res.evaluate_s = seconds(t);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const ImageId id = res.view_ids[i];
    res.sparse.emplace(id, std::move(sparse[i]));
    res.bundles.emplace(id, std::move(bundles[i]));
    res.predictions.emplace(id, std::move(preds[i]));
    res.aligned.emplace(id, std::move(aligned[i]));
  }
  return res;
}

}  // namespace sfmdepth
