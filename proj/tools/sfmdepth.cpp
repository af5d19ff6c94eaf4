#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfmdepth/sfmdepth.hpp"

namespace fs = std::filesystem;
using namespace sfmdepth;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBoundsViolated = 3;

struct Overrides {
  std::string config;
  std::string sfm_dir;
  std::string image_dir;
  std::string pred_dir;
  std::string output_dir;
  std::string gt_dir;
  std::vector<std::string> views;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<int> k;
  std::string alignment;
  std::string provider;
  std::optional<int> ensemble_size;
  std::string fusion;
  bool no_distance_map = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON config file");
  cmd->add_option("--sfm-dir", o.sfm_dir, "COLMAP model directory");
  cmd->add_option("--image-dir", o.image_dir, "image directory");
  cmd->add_option("--pred-dir", o.pred_dir, "external prediction directory (from_files provider)");
  cmd->add_option("-o,--output-dir", o.output_dir, "output directory");
  cmd->add_option("--gt-dir", o.gt_dir, "ground truth directory (gt_mesh.ply, gt_depth/)");
  cmd->add_option("--views", o.views, "image names to process")->delimiter(',');
  cmd->add_option("--seed", o.seed, "global seed");
  cmd->add_option("--workers", o.workers, "worker threads (0 = hardware concurrency)");
  cmd->add_option("--k", o.k, "conditioning neighbours (0 disables densification)");
  cmd->add_option("--alignment", o.alignment, "ransac | least_square | none");
  cmd->add_option("--provider", o.provider, "from_files | synthetic_oracle | constant | conditioning");
  cmd->add_option("--ensemble-size", o.ensemble_size, "predictions per view");
  cmd->add_option("--fusion", o.fusion, "tsdf | point_cloud");
  cmd->add_flag("--no-distance-map", o.no_distance_map, "skip the distance map");
  cmd->add_option("--set", o.sets, "config override, e.g. alignment.iterations=500 (repeatable)");
}

// "a.b.c=value" -> {"a": {"b": {"c": value}}}; the value is parsed as JSON
// when possible and kept as a string otherwise.
Json dotted_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorCode::InvalidConfig, "--set expects key=value, got '" + s + "'");
  const std::string key = s.substr(0, eq);
  const std::string raw = s.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json root = Json::object();
  Json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  return root;
}

// Defaults < config file < environment (paths) < flags < --set.
PipelineConfig resolve_config(const Overrides& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  apply_env_overrides(cfg);
  if (!o.sfm_dir.empty()) cfg.paths.sfm_dir = o.sfm_dir;
  if (!o.image_dir.empty()) cfg.paths.image_dir = o.image_dir;
  if (!o.pred_dir.empty()) cfg.paths.prediction_dir = o.pred_dir;
  if (!o.output_dir.empty()) cfg.paths.output_dir = o.output_dir;
  if (!o.gt_dir.empty()) cfg.paths.gt_dir = o.gt_dir;
  if (!o.views.empty()) cfg.views = o.views;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.k) cfg.conditioning.k = *o.k;
  if (!o.alignment.empty()) cfg.alignment.method = parse_alignment_method(o.alignment);
  if (!o.provider.empty()) cfg.provider.kind = parse_provider_kind(o.provider);
  if (o.ensemble_size) cfg.provider.ensemble_size = *o.ensemble_size;
  if (!o.fusion.empty()) cfg.fusion.mode = parse_fusion_mode(o.fusion);
  if (o.no_distance_map) cfg.conditioning.use_distance_map = false;
  for (const auto& s : o.sets) apply_config_json(cfg, dotted_override(s));
  cfg.validate();
  return cfg;
}

SfmModel load_model(const PipelineConfig& cfg) {
  if (cfg.paths.sfm_dir.empty()) fail(ErrorCode::InvalidConfig, "paths.sfm_dir is not set");
  return with_context("load", "", [&] { return read_model(cfg.paths.sfm_dir); });
}

const std::string& name_of(const SfmModel& model, ImageId id) { return model.image(id).name; }

std::unique_ptr<DepthProvider> build_provider(const SfmModel& model, const std::vector<ImageId>& ids,
                                              const PipelineConfig& cfg) {
  ProviderSpec spec = cfg.provider;
  spec.noise.seed = cfg.seed;
  spec.prediction_dir = cfg.paths.prediction_dir;
  return make_provider(spec, load_gt_depths(model, ids, cfg));
}

void write_metrics(const PipelineConfig& cfg, const MetricsReport& report) {
  io::write_json(layout::metrics_json(cfg), to_json(report));
  io::write_text_file(layout::metrics_table(cfg), to_table(report));
  std::cout << to_table(report);
}

int report_violations(const std::vector<std::string>& violations) {
  for (const auto& v : violations) std::cerr << "metric bound violated: " << v << '\n';
  return violations.empty() ? 0 : kExitBoundsViolated;
}

void write_fused(const PipelineConfig& cfg, const FusionOutput& out) {
  if (const auto* mesh = std::get_if<TriangleMesh>(&out)) {
    io::write_mesh_ply(layout::mesh_path(cfg), *mesh);
    std::cout << "mesh: " << mesh->vertices.size() << " vertices, " << mesh->triangles.size() << " triangles\n";
  } else {
    const auto& cloud = std::get<FusedPointCloud>(out);
    io::write_point_cloud_ply(layout::cloud_path(cfg), cloud);
    std::cout << "point cloud: " << cloud.points.size() << " points\n";
  }
}

TriangleMesh load_gt_mesh(const PipelineConfig& cfg) {
  if (cfg.paths.gt_dir.empty()) fail(ErrorCode::InvalidConfig, "evaluation needs paths.gt_dir");
  return io::read_mesh_ply(layout::gt_mesh(cfg));
}

int cmd_project(const PipelineConfig& cfg) {
  const SfmModel model = load_model(cfg);
  const auto ids = with_context("project", "", [&] { return select_views(model, cfg.views); });
  for (ImageId id : ids) {
    const auto& name = name_of(model, id);
    with_context("project", name, [&] { io::write_sparse(layout::sparse_dir(cfg), name, stage_project(model, id, cfg)); });
  }
  std::cout << "project: " << ids.size() << " view(s) -> " << layout::sparse_dir(cfg).string() << '\n';
  return 0;
}

int cmd_condition(const PipelineConfig& cfg) {
  const SfmModel model = load_model(cfg);
  const auto ids = with_context("condition", "", [&] { return select_views(model, cfg.views); });
  for (ImageId id : ids) {
    const auto& name = name_of(model, id);
    with_context("condition", name, [&] {
      const SparseDepthMap sparse = io::read_sparse(layout::sparse_dir(cfg), name);
      io::write_bundle(layout::conditioning_dir(cfg), name, stage_condition(sparse, cfg));
    });
  }
  std::cout << "condition: " << ids.size() << " view(s) -> " << layout::conditioning_dir(cfg).string() << '\n';
  return 0;
}

int cmd_predict(const PipelineConfig& cfg) {
  const SfmModel model = load_model(cfg);
  const auto ids = with_context("predict", "", [&] { return select_views(model, cfg.views); });
  const auto provider = with_context("predict", "", [&] { return build_provider(model, ids, cfg); });
  for (ImageId id : ids) {
    const auto& name = name_of(model, id);
    with_context("predict", name, [&] {
      const SparseDepthMap sparse = io::read_sparse(layout::sparse_dir(cfg), name);
      const ConditioningBundle bundle = io::read_bundle(layout::conditioning_dir(cfg), name, sparse);
      const DenseDepthMap pred = stage_predict(*provider, view_context(model, id, cfg), bundle, cfg);
      io::write_dense(layout::prediction_dir(cfg), name, pred);
    });
  }
  std::cout << "predict: " << ids.size() << " view(s) -> " << layout::prediction_dir(cfg).string() << '\n';
  return 0;
}

int cmd_align(const PipelineConfig& cfg) {
  const SfmModel model = load_model(cfg);
  const auto ids = with_context("align", "", [&] { return select_views(model, cfg.views); });
  Json log = Json::array();
  for (ImageId id : ids) {
    const auto& name = name_of(model, id);
    with_context("align", name, [&] {
      const SparseDepthMap sparse = io::read_sparse(layout::sparse_dir(cfg), name);
      const ConditioningBundle bundle = io::read_bundle(layout::conditioning_dir(cfg), name, sparse);
      const DenseDepthMap pred = io::read_dense(layout::prediction_dir(cfg), name);
      const AlignmentResult r = stage_align(pred, bundle, cfg);
      io::write_dense(layout::aligned_dir(cfg), name, r.depth);
      log.push_back(alignment_entry(name, r, cfg.alignment.method));
    });
  }
  io::write_json(layout::alignment_log(cfg), log);
  std::cout << "align: " << ids.size() << " view(s) -> " << layout::aligned_dir(cfg).string() << '\n';
  return 0;
}

int cmd_fuse(const PipelineConfig& cfg) {
  const SfmModel model = load_model(cfg);
  const auto ids = with_context("fuse", "", [&] { return select_views(model, cfg.views); });
  std::vector<ViewDepth> views;
  for (ImageId id : ids) {
    const auto& name = name_of(model, id);
    views.push_back({id, with_context("fuse", name, [&] { return io::read_dense(layout::aligned_dir(cfg), name); })});
  }
  write_fused(cfg, with_context("fuse", "", [&] { return stage_fuse(views, model, cfg); }));
  return 0;
}

int cmd_evaluate(const PipelineConfig& cfg) {
  const SfmModel model = load_model(cfg);
  const auto ids = with_context("evaluate", "", [&] { return select_views(model, cfg.views); });
  const MetricsReport report = with_context("evaluate", "", [&] {
    FusionOutput fused;
    if (cfg.fusion.mode == FusionMode::Tsdf) {
      fused = io::read_mesh_ply(layout::mesh_path(cfg));
    } else {
      FusedPointCloud cloud;
      for (const auto& p : io::read_ply_points(layout::cloud_path(cfg))) cloud.points.push_back({p, 0});
      fused = std::move(cloud);
    }
    const TriangleMesh gt_mesh = load_gt_mesh(cfg);
    std::map<std::string, DenseDepthMap> aligned;
    std::map<std::string, DenseDepthMap> gt;
    for (const auto& [id, depth] : load_gt_depths(model, ids, cfg)) gt.emplace(name_of(model, id), depth);
    for (ImageId id : ids) {
      const auto& name = name_of(model, id);
      if (fs::exists(io::depth_path(layout::aligned_dir(cfg), name))) {
        aligned.emplace(name, io::read_dense(layout::aligned_dir(cfg), name));
      }
    }
    return stage_evaluate(fused, gt_mesh, aligned, gt, cfg);
  });
  write_metrics(cfg, report);
  return report_violations(check_bounds(report, cfg.evaluation.bounds));
}

int cmd_reconstruct(const PipelineConfig& cfg) {
  const SfmModel model = load_model(cfg);
  const auto ids = with_context("reconstruct", "", [&] { return select_views(model, cfg.views); });
  const auto gt_depths = with_context("load", "", [&] { return load_gt_depths(model, ids, cfg); });
  std::optional<TriangleMesh> gt_mesh;
  if (cfg.evaluation.enabled && !cfg.paths.gt_dir.empty() && fs::exists(layout::gt_mesh(cfg))) {
    gt_mesh = with_context("load", "", [&] { return io::read_mesh_ply(layout::gt_mesh(cfg)); });
  }
  const auto start = std::chrono::steady_clock::now();
  const ReconstructionResult res = reconstruct(model, cfg, gt_depths, gt_mesh ? &*gt_mesh : nullptr);
  const double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json log = Json::array();
  for (ImageId id : res.view_ids) {
    const auto& name = name_of(model, id);
    io::write_sparse(layout::sparse_dir(cfg), name, res.sparse.at(id));
    io::write_bundle(layout::conditioning_dir(cfg), name, res.bundles.at(id));
    io::write_dense(layout::prediction_dir(cfg), name, res.predictions.at(id));
    io::write_dense(layout::aligned_dir(cfg), name, res.aligned.at(id).depth);
    log.push_back(alignment_entry(name, res.aligned.at(id), cfg.alignment.method));
  }
  io::write_json(layout::alignment_log(cfg), log);
  write_fused(cfg, res.fused);

  // Timings live apart from the deterministic outputs.
  Json timings = Json::array();
  for (const auto& t : res.timings) {
    timings.push_back({{"image", t.image},
                       {"project_s", t.project_s},
                       {"condition_s", t.condition_s},
                       {"predict_s", t.predict_s},
                       {"align_s", t.align_s}});
  }
  io::write_json(layout::run_log(cfg), Json{{"config", config_to_json(cfg)},
                                            {"views", timings},
                                            {"fuse_s", res.fuse_s},
                                            {"evaluate_s", res.evaluate_s},
                                            {"total_s", total_s}});
  if (!res.metrics) return 0;
  write_metrics(cfg, *res.metrics);
  return report_violations(res.violations);
}

struct SynthOptions {
  std::string scene_config;
  std::string out = "scene";
  std::string shape;
  std::string trajectory;
  std::optional<int> n_views;
  std::optional<int> width;
  std::optional<int> height;
  std::optional<int> density;
  std::optional<double> outliers;
  std::optional<double> noise;
  std::optional<double> hfov;
  std::optional<std::uint64_t> seed;
  bool text = false;
};

int cmd_synth(const SynthOptions& o) {
  Json j = Json::object();
  if (!o.scene_config.empty()) j = io::read_json(o.scene_config);
  if (!o.shape.empty()) j["shape"] = o.shape;
  if (!o.trajectory.empty()) j["trajectory"] = o.trajectory;
  if (o.n_views) j["n_views"] = *o.n_views;
  if (o.width) j["width"] = *o.width;
  if (o.height) j["height"] = *o.height;
  if (o.density) j["sparse_density"] = *o.density;
  if (o.outliers) j["outlier_fraction"] = *o.outliers;
  if (o.noise) j["noise_depth"] = *o.noise;
  if (o.hfov) j["hfov_deg"] = *o.hfov;
  if (o.seed) j["seed"] = *o.seed;
  const SceneSpec spec = scene_spec_from_json(j);
  const SyntheticScene scene = with_context("synth", "", [&] { return generate(spec); });
  write_scene(scene, o.out, o.text ? ModelFormat::Text : ModelFormat::Binary);
  std::cout << "synth: " << to_string(spec.shape) << ", " << scene.model.images.size() << " views, "
            << scene.model.points.size() << " points, " << scene.outlier_ids.size() << " outliers -> " << o.out
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view reconstruction from SfM-conditioned monocular depth"};
  app.require_subcommand(1);

  Overrides o;
  std::map<std::string, int (*)(const PipelineConfig&)> stages{
      {"project", cmd_project},   {"condition", cmd_condition},     {"predict", cmd_predict},
      {"align", cmd_align},       {"fuse", cmd_fuse},               {"evaluate", cmd_evaluate},
      {"reconstruct", cmd_reconstruct}};
  const std::map<std::string, std::string> help{
      {"project", "render sparse depth maps from the SfM model"},
      {"condition", "densify and normalize sparse depth into conditioning bundles"},
      {"predict", "run the depth provider and denormalize its output"},
      {"align", "fit per-view scale and shift against the SfM depth"},
      {"fuse", "fuse aligned depth into a mesh or point cloud"},
      {"evaluate", "compute Chamfer, F-score and depth RMSE against ground truth"},
      {"reconstruct", "run every stage in one pass"}};
  std::vector<CLI::App*> stage_cmds;
  for (const auto& [name, fn] : stages) {
    CLI::App* cmd = app.add_subcommand(name, help.at(name));
    add_common(cmd, o);
    stage_cmds.push_back(cmd);
  }

  SynthOptions so;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene with exact ground truth");
  synth->add_option("--scene", so.scene_config, "scene spec JSON");
  synth->add_option("-o,--out", so.out, "output directory");
  synth->add_option("--shape", so.shape, "plane | sphere | room");
  synth->add_option("--trajectory", so.trajectory, "orbit | line");
  synth->add_option("--n-views", so.n_views, "number of views");
  synth->add_option("--width", so.width, "image width");
  synth->add_option("--height", so.height, "image height");
  synth->add_option("--density", so.density, "sparse points sampled per view");
  synth->add_option("--outliers", so.outliers, "outlier fraction in [0, 1)");
  synth->add_option("--noise", so.noise, "depth noise sigma");
  synth->add_option("--hfov", so.hfov, "horizontal field of view in degrees");
  synth->add_option("--seed", so.seed, "generation seed");
  synth->add_flag("--text", so.text, "write the SfM model as text instead of binary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(so);
    for (CLI::App* cmd : stage_cmds) {
      if (cmd->parsed()) return stages.at(cmd->get_name())(resolve_config(o));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
