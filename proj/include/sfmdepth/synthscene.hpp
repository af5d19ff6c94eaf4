#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sfmdepth/depth_io.hpp"
#include "sfmdepth/depth_map.hpp"
#include "sfmdepth/geometry.hpp"
#include "sfmdepth/mesh.hpp"
#include "sfmdepth/sfm_io.hpp"
#include "sfmdepth/sfm_model.hpp"

// Procedural scenes with analytic ground truth. World frames:
//   Plane  - the plane z = plane_z, cameras near z = 0 looking toward +z.
//   Sphere - centered at the origin.
//   Room   - floor and four walls of [-hx, hx] x [-hy, hy] x [0, height], open
//            at the top, z up. Every surface is flat and untextured.

namespace sfmdepth {

enum class SceneShape { Plane, Sphere, Room };
enum class Trajectory { Orbit, Line };

struct SceneSpec {
  SceneShape shape = SceneShape::Sphere;
  double plane_z = 2.0;
  double radius = 1.0;
  Eigen::Vector3d room_extents{2.0, 2.0, 2.5};  // (hx, hy, height)
  int n_views = 8;
  Trajectory trajectory = Trajectory::Orbit;
  int width = 160;
  int height = 120;
  /// Horizontal field of view; unset picks 60 deg (Plane, Sphere) or 100 deg (Room).
  std::optional<double> hfov_deg;
  /// Sphere camera distance from the center; unset picks 3 * radius.
  std::optional<double> camera_distance;
  int sparse_density = 200;
  double outlier_fraction = 0.0;
  double noise_depth = 0.0;
  std::uint64_t seed = 0;

  double resolved_hfov_deg() const {
    return hfov_deg.value_or(shape == SceneShape::Room ? 100.0 : 60.0);
  }
  double resolved_camera_distance() const { return camera_distance.value_or(3.0 * radius); }

  void validate() const {
    auto bad = [](const std::string& what) { fail(ErrorCode::InvalidSpec, what); };
    if (n_views < 1) bad("n_views must be >= 1");
    if (width < 2 || height < 2) bad("image size must be at least 2x2");
    if (sparse_density < 0) bad("sparse_density must be >= 0");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) bad("outlier_fraction must lie in [0, 1)");
    if (!(noise_depth >= 0.0)) bad("noise_depth must be >= 0");
    const double fov = resolved_hfov_deg();
    if (!(fov > 1.0 && fov < 170.0)) bad("hfov_deg must lie in (1, 170)");
    if (shape == SceneShape::Plane && !(plane_z > 0.0)) bad("plane_z must be > 0");
    if (shape == SceneShape::Sphere) {
      if (!(radius > 0.0)) bad("radius must be > 0");
      if (!(resolved_camera_distance() > radius)) bad("cameras must sit outside the sphere");
    }
    if (shape == SceneShape::Room && !(room_extents.minCoeff() > 0.0)) bad("room extents must be > 0");
  }
};

struct SyntheticScene {
  SceneSpec spec;
  SfmModel model;
  std::map<ImageId, DenseDepthMap> gt_depths;
  TriangleMesh gt_mesh;
  /// Points whose position was replaced by a gross depth error.
  std::set<Point3dId> outlier_ids;
  /// Sparse depth each view receives from its observations (nearest wins).
  std::map<ImageId, SparseDepthMap> planted_sparse;
};

/// World-to-camera rotation whose optical axis points from `center` to `target`
/// (x right, y down, z forward).
inline Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& center, const Eigen::Vector3d& target,
                                        Eigen::Vector3d up = Eigen::Vector3d::UnitZ()) {
  const Eigen::Vector3d forward = (target - center).normalized();
  if (std::abs(forward.dot(up.normalized())) > 0.999) up = -Eigen::Vector3d::UnitY();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  return r;
}

namespace synth_detail {

inline constexpr double kHitEps = 1e-9;

// Smallest positive ray parameter hitting the analytic surface, if any.
inline std::optional<double> raycast(const SceneSpec& spec, const Eigen::Vector3d& origin,
                                     const Eigen::Vector3d& dir) {
  switch (spec.shape) {
    case SceneShape::Plane: {
      if (dir.z() == 0.0) return std::nullopt;
      const double s = (spec.plane_z - origin.z()) / dir.z();
      return s > kHitEps ? std::optional<double>(s) : std::nullopt;
    }
    case SceneShape::Sphere: {
      const double a = dir.dot(dir);
      const double b = 2.0 * origin.dot(dir);
      const double c = origin.dot(origin) - spec.radius * spec.radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) return std::nullopt;
      const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
      double s0 = q / a;
      double s1 = q != 0.0 ? c / q : s0;
      if (s0 > s1) std::swap(s0, s1);
      if (s0 > kHitEps) return s0;
      if (s1 > kHitEps) return s1;
      return std::nullopt;
    }
    case SceneShape::Room: {
      const Eigen::Vector3d lo(-spec.room_extents.x(), -spec.room_extents.y(), 0.0);
      const Eigen::Vector3d hi(spec.room_extents.x(), spec.room_extents.y(), spec.room_extents.z());
      double best = std::numeric_limits<double>::infinity();
      int best_axis = -1;
      bool best_top = false;
      for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) continue;
        const double bound = dir[a] > 0.0 ? hi[a] : lo[a];
        const double s = (bound - origin[a]) / dir[a];
        if (s > kHitEps && s < best) {
          best = s;
          best_axis = a;
          best_top = (a == 2 && dir[a] > 0.0);
        }
      }
      if (best_axis < 0 || best_top) return std::nullopt;
      return best;
    }
  }
  return std::nullopt;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out;
  if (n == 1) return {0.5 * (a + b)};
  for (int i = 0; i < n; ++i) out.push_back(a + (b - a) * i / (n - 1));
  return out;
}

struct Placement {
  Eigen::Vector3d center;
  Eigen::Vector3d target;
};

inline std::vector<Placement> place_cameras(const SceneSpec& spec) {
  std::vector<Placement> out;
  const int n = spec.n_views;
  const double two_pi = 2.0 * std::numbers::pi;
  switch (spec.shape) {
    case SceneShape::Plane: {
      const double z = spec.plane_z;
      if (spec.trajectory == Trajectory::Line) {
        for (double x : linspace(-0.5 * z, 0.5 * z, n)) out.push_back({{x, 0.0, 0.0}, {x, 0.0, z}});
      } else {
        const double rho = 0.5 * z;
        for (int i = 0; i < n; ++i) {
          const double phi = two_pi * i / n;
          out.push_back({{rho * std::cos(phi), rho * std::sin(phi), 0.0}, {0.0, 0.0, z}});
        }
      }
      break;
    }
    case SceneShape::Sphere: {
      const double d = spec.resolved_camera_distance();
      if (spec.trajectory == Trajectory::Line) {
        for (double x : linspace(-spec.radius, spec.radius, n)) out.push_back({{x, -d, 0.0}, {x, 0.0, 0.0}});
      } else {
        const double elev = n > 1 ? 20.0 * std::numbers::pi / 180.0 : 0.0;
        for (int i = 0; i < n; ++i) {
          const double phi = two_pi * i / n;
          const double e = (i % 2 == 0) ? elev : -elev;
          out.push_back({{d * std::cos(e) * std::cos(phi), d * std::cos(e) * std::sin(phi), d * std::sin(e)},
                         Eigen::Vector3d::Zero()});
        }
      }
      break;
    }
    case SceneShape::Room: {
      const double hx = spec.room_extents.x();
      const double hy = spec.room_extents.y();
      const double h = spec.room_extents.z();
      const double eye = 0.6 * h;
      const double pitch = std::tan(19.0 * std::numbers::pi / 180.0);
      if (spec.trajectory == Trajectory::Line) {
        for (double x : linspace(-0.5 * hx, 0.5 * hx, n)) {
          out.push_back({{x, 0.0, eye}, {x, 1.0, eye - pitch}});
        }
      } else {
        const double rho = 0.5 * std::min(hx, hy);
        for (int i = 0; i < n; ++i) {
          const double phi = two_pi * i / n;
          const Eigen::Vector3d c(rho * std::cos(phi), rho * std::sin(phi), eye);
          const Eigen::Vector3d toward(-std::cos(phi), -std::sin(phi), -pitch);
          out.push_back({c, c + toward});
        }
      }
      break;
    }
  }
  return out;
}

inline void add_quad(TriangleMesh& mesh, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), {a, b, c, d});
  mesh.triangles.push_back({base, base + 1, base + 2});
  mesh.triangles.push_back({base, base + 2, base + 3});
}

inline TriangleMesh build_gt_mesh(const SceneSpec& spec, const SfmModel& model) {
  TriangleMesh mesh;
  switch (spec.shape) {
    case SceneShape::Plane: {
      // Square covering every view's footprint (image corners hit the plane).
      double extent = 0.0;
      for (const auto& [id, img] : model.images) {
        const auto& cam = model.camera_of(img);
        const Eigen::Vector3d c = img.center();
        const Eigen::Matrix3d rt = img.rotation().transpose();
        for (double u : {-0.5, cam.width - 0.5}) {
          for (double v : {-0.5, cam.height - 0.5}) {
            const Eigen::Vector3d dir = rt * pixel_ray(cam, {u, v});
            if (auto s = raycast(spec, c, dir)) {
              const Eigen::Vector3d p = c + *s * dir;
              extent = std::max({extent, std::abs(p.x()), std::abs(p.y())});
            }
          }
        }
      }
      const double l = 1.05 * extent + 1e-3;
      const double z = spec.plane_z;
      add_quad(mesh, {-l, -l, z}, {-l, l, z}, {l, l, z}, {l, -l, z});
      break;
    }
    case SceneShape::Sphere: {
      const int n_lat = 128;
      const int n_lon = 256;
      const double r = spec.radius;
      mesh.vertices.push_back({0.0, 0.0, r});
      for (int i = 1; i < n_lat; ++i) {
        const double theta = std::numbers::pi * i / n_lat;
        for (int j = 0; j < n_lon; ++j) {
          const double phi = 2.0 * std::numbers::pi * j / n_lon;
          mesh.vertices.push_back({r * std::sin(theta) * std::cos(phi), r * std::sin(theta) * std::sin(phi),
                                   r * std::cos(theta)});
        }
      }
      mesh.vertices.push_back({0.0, 0.0, -r});
      const auto ring = [&](int i, int j) {
        return static_cast<std::uint32_t>(1 + (i - 1) * n_lon + ((j % n_lon) + n_lon) % n_lon);
      };
      const auto south = static_cast<std::uint32_t>(mesh.vertices.size() - 1);
      for (int j = 0; j < n_lon; ++j) mesh.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
      for (int i = 1; i + 1 < n_lat; ++i) {
        for (int j = 0; j < n_lon; ++j) {
          mesh.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
          mesh.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
        }
      }
      for (int j = 0; j < n_lon; ++j) mesh.triangles.push_back({ring(n_lat - 1, j), south, ring(n_lat - 1, j + 1)});
      break;
    }
    case SceneShape::Room: {
      const double hx = spec.room_extents.x();
      const double hy = spec.room_extents.y();
      const double h = spec.room_extents.z();
      add_quad(mesh, {-hx, -hy, 0}, {hx, -hy, 0}, {hx, hy, 0}, {-hx, hy, 0});      // floor
      add_quad(mesh, {hx, -hy, 0}, {hx, -hy, h}, {hx, hy, h}, {hx, hy, 0});        // +x
      add_quad(mesh, {-hx, hy, 0}, {-hx, hy, h}, {-hx, -hy, h}, {-hx, -hy, 0});    // -x
      add_quad(mesh, {hx, hy, 0}, {hx, hy, h}, {-hx, hy, h}, {-hx, hy, 0});        // +y
      add_quad(mesh, {-hx, -hy, 0}, {-hx, -hy, h}, {hx, -hy, h}, {hx, -hy, 0});    // -y
      break;
    }
  }
  compute_vertex_normals(mesh);
  return mesh;
}

}  // namespace synth_detail

/// Analytic z-depth of the first surface hit through pixel uv, if any.
inline std::optional<double> analytic_depth(const SceneSpec& spec, const CameraIntrinsics& cam,
                                            const PosedImage& pose, const Eigen::Vector2d& uv) {
  const Eigen::Vector3d dir = pose.rotation().transpose() * pixel_ray(cam, uv);
  return synth_detail::raycast(spec, pose.center(), dir);
}

inline std::string synthetic_image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03d.png", index);
  return buf;
}

/// Builds cameras, exact depth maps, a ground-truth mesh and an SfM-like
/// sparse model sampled from the depth maps. Deterministic under spec.seed.
inline SyntheticScene generate(const SceneSpec& spec) {
  spec.validate();
  SyntheticScene scene;
  scene.spec = spec;
  std::mt19937_64 rng(spec.seed);

  CameraIntrinsics cam;
  cam.camera_id = 1;
  cam.model = CameraModel::Pinhole;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.fx = cam.fy = 0.5 * spec.width / std::tan(0.5 * spec.resolved_hfov_deg() * std::numbers::pi / 180.0);
  cam.cx = 0.5 * spec.width;
  cam.cy = 0.5 * spec.height;
  scene.model.cameras.emplace(cam.camera_id, cam);

  const auto placements = synth_detail::place_cameras(spec);
  for (int v = 0; v < spec.n_views; ++v) {
    PosedImage img;
    img.image_id = static_cast<ImageId>(v + 1);
    img.camera_id = cam.camera_id;
    img.name = synthetic_image_name(v);
    const Eigen::Matrix3d r = look_at_rotation(placements[v].center, placements[v].target);
    img.set_rotation(r);
    img.translation = -(img.rotation() * placements[v].center);
    scene.model.images.emplace(img.image_id, std::move(img));
  }

  // Ground-truth depth by analytic ray casting through every pixel center.
  for (const auto& [id, img] : scene.model.images) {
    DenseDepthMap gt(cam.width, cam.height, ScaleDomain::Metric);
    for (int r = 0; r < cam.height; ++r) {
      for (int c = 0; c < cam.width; ++c) {
        if (auto d = analytic_depth(spec, cam, img, {c, r})) gt.set(r, c, *d);
      }
    }
    scene.gt_depths.emplace(id, std::move(gt));
  }

  // Sparse points: sampled per view, gross outliers planted with known ids.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Point3dId next_id = 1;
  struct Planted {
    Eigen::Vector3d surface;
    bool outlier;
  };
  std::map<Point3dId, Planted> planted;

  for (auto& [id, img] : scene.model.images) {
    const DenseDepthMap& gt = scene.gt_depths.at(id);
    std::vector<std::size_t> valid;
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t i = 0; i < gt.depth.size(); ++i) {
      if (!gt.is_valid(i)) continue;
      valid.push_back(i);
      dmin = std::min(dmin, gt.depth[i]);
      dmax = std::max(dmax, gt.depth[i]);
    }
    const std::size_t n = std::min<std::size_t>(valid.size(), static_cast<std::size_t>(spec.sparse_density));
    for (std::size_t s = 0; s < n; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, valid.size() - 1);
      std::swap(valid[s], valid[pick(rng)]);
    }
    valid.resize(n);
    const auto n_out = static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(n)));
    std::vector<std::uint8_t> is_outlier(n, 0);
    std::fill(is_outlier.begin(), is_outlier.begin() + static_cast<std::ptrdiff_t>(n_out), std::uint8_t{1});
    std::shuffle(is_outlier.begin(), is_outlier.end(), rng);

    const Eigen::Vector3d center = img.center();
    const Eigen::Matrix3d rt = img.rotation().transpose();
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t pix = valid[s];
      const int r = static_cast<int>(pix / static_cast<std::size_t>(cam.width));
      const int c = static_cast<int>(pix % static_cast<std::size_t>(cam.width));
      const double d = gt.depth[pix];
      const Eigen::Vector3d dir = rt * pixel_ray(cam, {c, r});
      double placed = d;
      if (is_outlier[s]) {
        placed = unit(rng) < 0.5 ? dmin * (0.2 + 0.4 * unit(rng)) : dmax * (1.5 + 1.5 * unit(rng));
      } else if (spec.noise_depth > 0.0) {
        placed = std::max(d + spec.noise_depth * normal(rng), 0.05 * d);
      }
      ScenePoint pt;
      pt.point3d_id = next_id++;
      pt.xyz = center + placed * dir;
      pt.track.push_back({id, static_cast<std::uint32_t>(img.observations.size())});
      img.observations.push_back({Eigen::Vector2d(c, r), pt.point3d_id});
      planted.emplace(pt.point3d_id, Planted{center + d * dir, is_outlier[s] != 0});
      if (is_outlier[s]) scene.outlier_ids.insert(pt.point3d_id);
      scene.model.points.emplace(pt.point3d_id, std::move(pt));
    }
  }

  // Inlier points are also observed wherever their surface point is visible.
  for (auto& [pid, pt] : scene.model.points) {
    const Planted& info = planted.at(pid);
    if (info.outlier) continue;
    const ImageId origin = pt.track.front().image_id;
    for (auto& [id, img] : scene.model.images) {
      if (id == origin) continue;
      const Eigen::Vector3d surf_cam = world_to_camera(img, info.surface);
      const auto surf_uv = project(cam, surf_cam);
      if (!surf_uv) continue;
      const auto hit = analytic_depth(spec, cam, img, *surf_uv);
      if (!hit || std::abs(*hit - surf_cam.z()) > 1e-9 * surf_cam.z()) continue;
      const Eigen::Vector3d pc = world_to_camera(img, pt.xyz);
      const auto uv = project(cam, pc);
      if (!uv) continue;
      pt.track.push_back({id, static_cast<std::uint32_t>(img.observations.size())});
      img.observations.push_back({*uv, pid});
    }
  }

  for (const auto& [id, img] : scene.model.images) {
    SparseDepthMap map(cam.width, cam.height);
    for (const auto& obs : img.observations) {
      const double z = world_to_camera(img, scene.model.points.at(*obs.point3d_id).xyz).z();
      const int col = static_cast<int>(std::floor(obs.xy.x() + 0.5));
      const int row = static_cast<int>(std::floor(obs.xy.y() + 0.5));
      if (!(z > kMinProjectionDepth) || !map.depth.contains(row, col)) continue;
      if (map.has(row, col) && map.depth(row, col) <= z) continue;
      map.set(row, col, z, static_cast<std::int64_t>(*obs.point3d_id));
    }
    scene.planted_sparse.emplace(id, std::move(map));
  }

  scene.gt_mesh = synth_detail::build_gt_mesh(spec, scene.model);
  scene.model.validate();
  return scene;
}

inline std::string to_string(SceneShape s) {
  switch (s) {
    case SceneShape::Plane: return "plane";
    case SceneShape::Sphere: return "sphere";
    case SceneShape::Room: return "room";
  }
  return "?";
}

inline Json scene_spec_to_json(const SceneSpec& s) {
  Json j{{"shape", to_string(s.shape)},
         {"plane_z", s.plane_z},
         {"radius", s.radius},
         {"room_extents", {s.room_extents.x(), s.room_extents.y(), s.room_extents.z()}},
         {"n_views", s.n_views},
         {"trajectory", s.trajectory == Trajectory::Orbit ? "orbit" : "line"},
         {"width", s.width},
         {"height", s.height},
         {"hfov_deg", s.resolved_hfov_deg()},
         {"sparse_density", s.sparse_density},
         {"outlier_fraction", s.outlier_fraction},
         {"noise_depth", s.noise_depth},
         {"seed", s.seed}};
  if (s.shape == SceneShape::Sphere) j["camera_distance"] = s.resolved_camera_distance();
  return j;
}

inline SceneSpec scene_spec_from_json(const Json& j) {
  SceneSpec s;
  try {
    const auto shape = j.value("shape", std::string("sphere"));
    if (shape == "plane") {
      s.shape = SceneShape::Plane;
    } else if (shape == "sphere") {
      s.shape = SceneShape::Sphere;
    } else if (shape == "room") {
      s.shape = SceneShape::Room;
    } else {
      fail(ErrorCode::InvalidSpec, "unknown shape " + shape);
    }
    s.plane_z = j.value("plane_z", s.plane_z);
    s.radius = j.value("radius", s.radius);
    if (j.contains("room_extents")) {
      const auto e = j.at("room_extents").get<std::vector<double>>();
      if (e.size() != 3) fail(ErrorCode::InvalidSpec, "room_extents needs 3 values");
      s.room_extents = {e[0], e[1], e[2]};
    }
    s.n_views = j.value("n_views", s.n_views);
    const auto traj = j.value("trajectory", std::string("orbit"));
    if (traj != "orbit" && traj != "line") fail(ErrorCode::InvalidSpec, "unknown trajectory " + traj);
    s.trajectory = traj == "line" ? Trajectory::Line : Trajectory::Orbit;
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    if (j.contains("hfov_deg")) s.hfov_deg = j.at("hfov_deg").get<double>();
    if (j.contains("camera_distance")) s.camera_distance = j.at("camera_distance").get<double>();
    s.sparse_density = j.value("sparse_density", s.sparse_density);
    s.outlier_fraction = j.value("outlier_fraction", s.outlier_fraction);
    s.noise_depth = j.value("noise_depth", s.noise_depth);
    s.seed = j.value("seed", s.seed);
  } catch (const Json::exception& e) {
    fail(ErrorCode::InvalidSpec, e.what());
  }
  s.validate();
  return s;
}

/// On-disk layout consumed by the pipeline:
///   <dir>/sparse/            COLMAP model
///   <dir>/gt_depth/          <name>.depth.f32 + <name>.meta.json
///   <dir>/gt_mesh.ply
///   <dir>/scene.json         spec and planted outlier ids
inline void write_scene(const SyntheticScene& scene, const std::filesystem::path& dir,
                        ModelFormat format = ModelFormat::Binary) {
  write_model(scene.model, dir / "sparse", format);
  for (const auto& [id, gt] : scene.gt_depths) {
    io::write_dense(dir / "gt_depth", scene.model.images.at(id).name, gt);
  }
  io::write_mesh_ply(dir / "gt_mesh.ply", scene.gt_mesh);
  Json meta{{"spec", scene_spec_to_json(scene.spec)},
            {"outlier_ids", std::vector<Point3dId>(scene.outlier_ids.begin(), scene.outlier_ids.end())},
            {"num_points", scene.model.points.size()}};
  io::write_json(dir / "scene.json", meta);
}

}  // namespace sfmdepth
