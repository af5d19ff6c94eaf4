#include <cstdlib>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "sfmdepth/sfmdepth.hpp"
#include "test_util.hpp"

using namespace sfmdepth;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli_output.txt";
  const std::string cmd = std::string("\"") + SFMDEPTH_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = testutil::slurp(log);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

SceneSpec small_sphere(int views = 3) {
  SceneSpec s;
  s.shape = SceneShape::Sphere;
  s.n_views = views;
  s.width = 64;
  s.height = 48;
  s.sparse_density = 150;
  s.seed = 5;
  return s;
}

/// Writes a scene to `dir` and returns it as the pipeline will see it from disk.
SyntheticScene on_disk(const SceneSpec& spec, const fs::path& dir) {
  SyntheticScene scene = generate(spec);
  write_scene(scene, dir);
  scene.model = read_model(dir / "sparse");
  for (auto& [id, gt] : scene.gt_depths) gt = quantize_f32(gt);
  scene.gt_mesh = io::read_mesh_ply(dir / "gt_mesh.ply");
  return scene;
}

PipelineConfig scene_config(const fs::path& scene_dir, const fs::path& out) {
  PipelineConfig cfg;
  cfg.paths.sfm_dir = scene_dir / "sparse";
  cfg.paths.gt_dir = scene_dir;
  cfg.paths.output_dir = out;
  cfg.fusion.voxel_budget = 48 * 48 * 48;
  cfg.evaluation.sample_count = 5000;
  cfg.evaluation.tau = 0.05;
  return cfg;
}

std::string config_flags(const PipelineConfig& cfg, const fs::path& scratch) {
  const fs::path path = scratch / "config.json";
  io::write_json(path, config_to_json(cfg));
  return "-c " + q(path);
}

double voxel_size_for(const SfmModel& model, const PipelineConfig& cfg) {
  return make_volume(auto_bounds(model), cfg.fusion.voxel_budget, cfg.fusion.truncation_factor).voxel_size;
}

double chamfer_or_inf(const SfmModel& model, const PipelineConfig& cfg, const SyntheticScene& scene) {
  try {
    const auto metrics = *reconstruct(model, cfg, scene.gt_depths, &scene.gt_mesh).metrics;
    if (metrics.empty_reconstruction) return std::numeric_limits<double>::infinity();
    return metrics.geometry->chamfer;
  } catch (const Error& e) {
    // Nothing recovered inside the volume: treat as unbounded error.
    if (e.code() == ErrorCode::EmptyMesh || e.code() == ErrorCode::EmptyVolume) {
      return std::numeric_limits<double>::infinity();
    }
    throw;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, JsonRoundTrip) {
  PipelineConfig cfg;
  cfg.seed = 17;
  cfg.views = {"a.png", "b.png"};
  cfg.conditioning.k = 5;
  cfg.alignment.method = AlignmentMethod::LeastSquare;
  cfg.alignment.space = AlignmentSpace::InverseDepth;
  cfg.fusion.mode = FusionMode::PointCloud;
  cfg.fusion.bounds = VolumeBounds{{-1, -2, -3}, {1, 2, 3}};
  cfg.evaluation.bounds.chamfer_max = 0.5;
  cfg.provider.kind = ProviderKind::Constant;
  cfg.provider.constant_domain = ScaleDomain::Normalized;
  const Json j = config_to_json(cfg);
  PipelineConfig back;
  apply_config_json(back, j);
  EXPECT_EQ(config_to_json(back), j);
}

TEST(Config, PartialDocumentKeepsDefaults) {
  PipelineConfig cfg;
  apply_config_json(cfg, Json{{"alignment", {{"iterations", 50}}}});
  EXPECT_EQ(cfg.alignment.iterations, 50);
  EXPECT_EQ(cfg.alignment.method, AlignmentMethod::Ransac);
  EXPECT_EQ(cfg.conditioning.k, 3);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  PipelineConfig cfg;
  EXPECT_SFM_ERROR(apply_config_json(cfg, Json{{"fusion", {{"voxels", 1}}}}), ErrorCode::InvalidConfig);
  EXPECT_SFM_ERROR(apply_config_json(cfg, Json{{"extra", 1}}), ErrorCode::InvalidConfig);
  EXPECT_SFM_ERROR(apply_config_json(cfg, Json{{"seed", "abc"}}), ErrorCode::InvalidConfig);
  EXPECT_SFM_ERROR(apply_config_json(cfg, Json{{"alignment", {{"method", "magic"}}}}), ErrorCode::InvalidConfig);
  PipelineConfig neg;
  neg.conditioning.k = -1;
  EXPECT_SFM_ERROR(neg.validate(), ErrorCode::InvalidConfig);
  PipelineConfig tau;
  tau.evaluation.tau = 0.0;
  EXPECT_SFM_ERROR(tau.validate(), ErrorCode::InvalidConfig);
  TempDir dir;
  EXPECT_SFM_ERROR(load_config(dir / "absent.json"), ErrorCode::MissingFile);
  testutil::spit(dir / "broken.json", "{not json");
  EXPECT_SFM_ERROR(load_config(dir / "broken.json"), ErrorCode::InvalidConfig);
}

TEST(Config, EnvironmentOverridesPathsOnly) {
  PipelineConfig cfg;
  ::setenv("SFMDEPTH_OUTPUT_DIR", "/tmp/env_out", 1);
  ::setenv("SFMDEPTH_SFM_DIR", "", 1);
  apply_env_overrides(cfg);
  ::unsetenv("SFMDEPTH_OUTPUT_DIR");
  ::unsetenv("SFMDEPTH_SFM_DIR");
  EXPECT_EQ(cfg.paths.output_dir, fs::path("/tmp/env_out"));
  EXPECT_TRUE(cfg.paths.sfm_dir.empty());
}

TEST(Config, ShippedConfigsLoadAndValidate) {
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(SFMDEPTH_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    SCOPED_TRACE(entry.path().string());
    const PipelineConfig cfg = load_config(entry.path());
    EXPECT_NO_THROW(cfg.validate());
    ++count;
  }
  EXPECT_GE(count, 5u);
}

// ---------------------------------------------------------------------------
// In-memory pipeline

TEST(Pipeline, SphereOracleRansacTsdfRecoversSurface) {
  const SyntheticScene scene = generate(small_sphere(6));
  PipelineConfig cfg;
  cfg.provider.noise = {0.0, 2.0, 0.5, 0};
  cfg.fusion.voxel_budget = 64 * 64 * 64;
  cfg.evaluation.sample_count = 20000;
  const double v = voxel_size_for(scene.model, cfg);
  cfg.evaluation.tau = 2 * v;
  const double ransac = chamfer_or_inf(scene.model, cfg, scene);
  EXPECT_LT(ransac, 2 * v);
  cfg.alignment.method = AlignmentMethod::NoAlignment;
  EXPECT_GT(chamfer_or_inf(scene.model, cfg, scene), ransac);
}

TEST(Pipeline, ResultIndependentOfWorkerCount) {
  const SyntheticScene scene = generate(small_sphere(4));
  PipelineConfig cfg;
  cfg.provider.noise = {0.02, 1.5, 0.2, 0};
  cfg.fusion.voxel_budget = 32 * 32 * 32;
  cfg.evaluation.sample_count = 2000;
  cfg.workers = 1;
  const auto one = reconstruct(scene.model, cfg, scene.gt_depths, &scene.gt_mesh);
  cfg.workers = 4;
  const auto four = reconstruct(scene.model, cfg, scene.gt_depths, &scene.gt_mesh);
  EXPECT_EQ(std::get<TriangleMesh>(one.fused).vertices, std::get<TriangleMesh>(four.fused).vertices);
  EXPECT_EQ(to_json(*one.metrics), to_json(*four.metrics));
}

TEST(Pipeline, PointCloudFusionMode) {
  const SyntheticScene scene = generate(small_sphere(4));
  PipelineConfig cfg;
  cfg.fusion.mode = FusionMode::PointCloud;
  cfg.fusion.consistency.n_views = 1;
  // Dense reference sampling so its spacing sits well below tau.
  cfg.evaluation.sample_count = 200000;
  cfg.evaluation.tau = 0.02;
  const auto res = reconstruct(scene.model, cfg, scene.gt_depths, &scene.gt_mesh);
  ASSERT_TRUE(std::holds_alternative<FusedPointCloud>(res.fused));
  // Back-projected oracle depth lies on the sphere; only coverage is partial.
  EXPECT_GT(res.metrics->fscore->precision, 0.99);
  for (const auto& p : std::get<FusedPointCloud>(res.fused).positions()) EXPECT_NEAR(p.norm(), 1.0, 0.01);
}

TEST(Pipeline, FromFilesMissingViewIsNamed) {
  TempDir dir;
  const SyntheticScene scene = generate(small_sphere(3));
  PipelineConfig cfg;
  cfg.provider.kind = ProviderKind::FromFiles;
  cfg.paths.prediction_dir = dir.path();
  const auto& images = scene.model.images;
  for (const auto& [id, img] : images) {
    if (img.name != "view_001.png") io::write_dense(dir.path(), img.name, scene.gt_depths.at(id));
  }
  try {
    reconstruct(scene.model, cfg);
    FAIL() << "expected MissingPrediction";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPrediction);
    EXPECT_NE(std::string(e.what()).find("view_001.png"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, UnknownViewFilter) {
  const SyntheticScene scene = generate(small_sphere(2));
  PipelineConfig cfg;
  cfg.views = {"nope.png"};
  EXPECT_SFM_ERROR(reconstruct(scene.model, cfg), ErrorCode::UnknownImage);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ProjectWritesOneFilePerView) {
  TempDir dir;
  const SyntheticScene scene = on_disk(small_sphere(3), dir / "scene");
  const PipelineConfig cfg = scene_config(dir / "scene", dir / "out");
  const auto r = cli("project " + config_flags(cfg, dir.path()), dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  for (const auto& [id, img] : scene.model.images) {
    EXPECT_TRUE(fs::exists(io::depth_path(layout::sparse_dir(cfg), img.name)));
    EXPECT_TRUE(fs::exists(layout::sparse_dir(cfg) / (img.name + ".meta.json")));
    const SparseDepthMap got = io::read_sparse(layout::sparse_dir(cfg), img.name);
    EXPECT_EQ(got.depth, stage_project(scene.model, id, cfg).depth) << img.name;
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(layout::sparse_dir(cfg))) files += e.path().extension() == ".f32";
  EXPECT_EQ(files, 3u);
}

TEST(Cli, ProjectViewsFilter) {
  TempDir dir;
  on_disk(small_sphere(3), dir / "scene");
  const PipelineConfig cfg = scene_config(dir / "scene", dir / "out");
  const auto r = cli("project " + config_flags(cfg, dir.path()) + " --views view_001.png", dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(layout::sparse_dir(cfg))) files += e.path().extension() == ".f32";
  EXPECT_EQ(files, 1u);
  EXPECT_TRUE(fs::exists(io::depth_path(layout::sparse_dir(cfg), "view_001.png")));
}

TEST(Cli, ProjectMissingModelDir) {
  TempDir dir;
  const auto r = cli("project --sfm-dir " + q(dir / "nowhere") + " -o " + q(dir / "out"), dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("MissingFile"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("nowhere"), std::string::npos) << r.output;
}

TEST(Cli, ParseErrorsExitWithTwo) {
  TempDir dir;
  EXPECT_EQ(cli("project --no-such-flag", dir.path()).code, 2);
  EXPECT_EQ(cli("", dir.path()).code, 2);
}

TEST(Cli, InvalidConfigOverride) {
  TempDir dir;
  const auto r = cli("project --sfm-dir x --set fusion.nope=3", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("InvalidConfig"), std::string::npos) << r.output;
}

TEST(Cli, ConditionMatchesInMemoryBundle) {
  TempDir dir;
  const SyntheticScene scene = on_disk(small_sphere(3), dir / "scene");
  const PipelineConfig cfg = scene_config(dir / "scene", dir / "out");
  const std::string flags = config_flags(cfg, dir.path());
  ASSERT_EQ(cli("project " + flags, dir.path()).code, 0);
  const auto r = cli("condition " + flags, dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  for (const auto& [id, img] : scene.model.images) {
    const SparseDepthMap sparse = io::read_sparse(layout::sparse_dir(cfg), img.name);
    const ConditioningBundle want = stage_condition(stage_project(scene.model, id, cfg), cfg);
    const ConditioningBundle got = io::read_bundle(layout::conditioning_dir(cfg), img.name, sparse);
    EXPECT_EQ(got.densified_depth, want.densified_depth);
    ASSERT_TRUE(got.distance_map.has_value());
    EXPECT_EQ(*got.distance_map, *want.distance_map);
    EXPECT_EQ(got.range.d_min_adj, want.range.d_min_adj);
    EXPECT_EQ(got.range.d_max_adj, want.range.d_max_adj);
    EXPECT_EQ(got.trimmed.depth, want.trimmed.depth);
  }
}

TEST(Cli, ConditionKZeroPassesSparseThrough) {
  TempDir dir;
  const SyntheticScene scene = on_disk(small_sphere(2), dir / "scene");
  PipelineConfig cfg = scene_config(dir / "scene", dir / "out");
  cfg.conditioning.k = 0;
  const std::string flags = config_flags(cfg, dir.path()) + " --no-distance-map";
  ASSERT_EQ(cli("project " + flags, dir.path()).code, 0);
  ASSERT_EQ(cli("condition " + flags, dir.path()).code, 0);
  for (const auto& [id, img] : scene.model.images) {
    const SparseDepthMap sparse = io::read_sparse(layout::sparse_dir(cfg), img.name);
    const ConditioningBundle b = io::read_bundle(layout::conditioning_dir(cfg), img.name, sparse);
    EXPECT_FALSE(b.distance_map.has_value());
    EXPECT_EQ(b.k_used, 0);
    std::size_t valued = 0;
    for (std::size_t i = 0; i < sparse.depth.size(); ++i) {
      const double want = b.trimmed.has(i) ? normalize_value(b.trimmed.depth[i], b.range) : -1.0;
      EXPECT_EQ(b.densified_depth[i], static_cast<double>(static_cast<float>(want)));
      valued += b.trimmed.has(i);
    }
    EXPECT_GT(valued, 0u);
  }
}

TEST(Cli, ConditionRejectsEmptyView) {
  TempDir dir;
  const SyntheticScene scene = on_disk(small_sphere(2), dir / "scene");
  const PipelineConfig cfg = scene_config(dir / "scene", dir / "out");
  const std::string flags = config_flags(cfg, dir.path());
  ASSERT_EQ(cli("project " + flags, dir.path()).code, 0);
  const auto& cam = scene.model.cameras.begin()->second;
  io::write_sparse(layout::sparse_dir(cfg), "view_000.png", SparseDepthMap(cam.width, cam.height));
  const auto r = cli("condition " + flags, dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("EmptySparseDepth"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("view_000.png"), std::string::npos) << r.output;
}

TEST(Cli, ChainedStagesEqualOneShotReconstruct) {
  TempDir dir;
  const SyntheticScene scene = on_disk(small_sphere(3), dir / "scene");
  PipelineConfig cfg = scene_config(dir / "scene", dir / "staged");
  cfg.provider.noise = {0.01, 1.7, -0.3, 0};
  cfg.seed = 9;
  const std::string flags = config_flags(cfg, dir.path());
  for (const char* stage : {"project", "condition", "predict", "align", "fuse", "evaluate"}) {
    const auto r = cli(std::string(stage) + " " + flags, dir.path());
    ASSERT_EQ(r.code, 0) << stage << ": " << r.output;
  }
  const auto one = cli(std::string("reconstruct ") + flags + " -o " + q(dir / "oneshot"), dir.path());
  ASSERT_EQ(one.code, 0) << one.output;

  const ReconstructionResult mem = reconstruct(scene.model, cfg, scene.gt_depths, &scene.gt_mesh);
  for (const auto& [id, img] : scene.model.images) {
    for (const fs::path& out : {dir / "staged", dir / "oneshot"}) {
      PipelineConfig c = cfg;
      c.paths.output_dir = out;
      const DenseDepthMap pred = io::read_dense(layout::prediction_dir(c), img.name);
      const DenseDepthMap aligned = io::read_dense(layout::aligned_dir(c), img.name);
      ASSERT_EQ(aligned.valid, mem.aligned.at(id).depth.valid);
      for (std::size_t i = 0; i < aligned.depth.size(); ++i) {
        EXPECT_NEAR(aligned.depth[i], mem.aligned.at(id).depth.depth[i], 1e-9);
        EXPECT_NEAR(pred.depth[i], mem.predictions.at(id).depth[i], 1e-9);
      }
    }
  }
  PipelineConfig staged = cfg;
  PipelineConfig oneshot = cfg;
  oneshot.paths.output_dir = dir / "oneshot";
  const TriangleMesh& want = std::get<TriangleMesh>(mem.fused);
  for (const auto* c : {&staged, &oneshot}) {
    const TriangleMesh got = io::read_mesh_ply(layout::mesh_path(*c));
    ASSERT_EQ(got.vertices.size(), want.vertices.size());
    ASSERT_EQ(got.triangles, want.triangles);
    for (std::size_t i = 0; i < got.vertices.size(); ++i) EXPECT_LT((got.vertices[i] - want.vertices[i]).norm(), 1e-9);
    const Json metrics = io::read_json(layout::metrics_json(*c));
    EXPECT_NEAR(metrics.at("chamfer").get<double>(), mem.metrics->geometry->chamfer, 1e-9);
    EXPECT_NEAR(metrics.at("fscore").get<double>(), mem.metrics->fscore->fscore, 1e-9);
    EXPECT_NEAR(metrics.at("depth_rmse").get<double>(), *mem.metrics->depth_rmse, 1e-9);
  }
  const Json log = io::read_json(layout::alignment_log(oneshot));
  ASSERT_EQ(log.size(), 3u);
  EXPECT_NEAR(log[0].at("scale").get<double>(), 1.0 / 1.7, 0.05);
  EXPECT_TRUE(fs::exists(layout::run_log(oneshot)));
}

TEST(Cli, MetricBoundViolationExitsWithThree) {
  TempDir dir;
  on_disk(small_sphere(2), dir / "scene");
  const PipelineConfig cfg = scene_config(dir / "scene", dir / "out");
  const std::string flags = config_flags(cfg, dir.path());
  EXPECT_EQ(cli("reconstruct " + flags + " --set evaluation.bounds.chamfer_max=1e-12", dir.path()).code, 3);
  EXPECT_EQ(cli("reconstruct " + flags + " --set evaluation.bounds.chamfer_max=10", dir.path()).code, 0);
  EXPECT_EQ(cli("evaluate " + flags + " --set evaluation.bounds.fscore_min=1.5", dir.path()).code, 3);
}

TEST(Cli, ReconstructIsByteDeterministic) {
  TempDir dir;
  on_disk(small_sphere(3), dir / "scene");
  PipelineConfig cfg = scene_config(dir / "scene", dir / "a");
  cfg.provider.noise = {0.02, 1.3, 0.1, 0};
  cfg.seed = 4;
  const std::string flags = config_flags(cfg, dir.path());
  ASSERT_EQ(cli("reconstruct " + flags, dir.path()).code, 0);
  ASSERT_EQ(cli("reconstruct " + flags + " -o " + q(dir / "b") + " --workers 1", dir.path()).code, 0);
  EXPECT_EQ(testutil::slurp(dir / "a" / "mesh.ply"), testutil::slurp(dir / "b" / "mesh.ply"));
  EXPECT_EQ(testutil::slurp(dir / "a" / "metrics.json"), testutil::slurp(dir / "b" / "metrics.json"));
}

TEST(Cli, SynthWritesLoadableScene) {
  TempDir dir;
  const auto r = cli("synth --shape room --n-views 2 --width 40 --height 30 --density 30 -o " + q(dir / "s"),
                     dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const SfmModel model = read_model(dir / "s" / "sparse");
  EXPECT_EQ(model.images.size(), 2u);
  EXPECT_EQ(model.points.size(), 60u);
  EXPECT_FALSE(io::read_mesh_ply(dir / "s" / "gt_mesh.ply").empty());
  EXPECT_EQ(cli("synth --shape torus -o " + q(dir / "t"), dir.path()).code, 1);
}

TEST(Cli, EmptyReconstructionIsReportedNotFatal) {
  TempDir dir;
  on_disk(small_sphere(3), dir / "scene");
  PipelineConfig cfg = scene_config(dir / "scene", dir / "out");
  // Uncorrected depth lands far behind the sphere, outside the fusion volume.
  cfg.provider.noise = {0.0, 4.0, 2.0, 0};
  cfg.alignment.method = AlignmentMethod::NoAlignment;
  const std::string flags = config_flags(cfg, dir.path());
  const auto r = cli("reconstruct " + flags, dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const Json metrics = io::read_json(layout::metrics_json(cfg));
  EXPECT_TRUE(metrics.at("empty_reconstruction").get<bool>());
  EXPECT_EQ(metrics.at("fscore").get<double>(), 0.0);
  EXPECT_TRUE(io::read_mesh_ply(layout::mesh_path(cfg)).empty());
  ASSERT_EQ(cli("evaluate " + flags, dir.path()).code, 0);
  EXPECT_EQ(cli("evaluate " + flags + " --set evaluation.bounds.chamfer_max=1", dir.path()).code, 3);
}
