#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Core>

#include "sfmdepth/depth_map.hpp"
#include "sfmdepth/sfm_model.hpp"

namespace sfmdepth {

// Pixel convention: pixel (row, col) has its center at image coordinates
// (u, v) = (col, row). A continuous coordinate belongs to the pixel it rounds to.

/// Points at or behind this camera-frame depth never project.
inline constexpr double kMinProjectionDepth = 1e-6;

inline Eigen::Vector3d world_to_camera(const PosedImage& pose, const Eigen::Vector3d& xyz_world) {
  return pose.rotation() * xyz_world + pose.translation;
}

inline Eigen::Vector3d camera_to_world(const PosedImage& pose, const Eigen::Vector3d& xyz_cam) {
  return pose.rotation().transpose() * (xyz_cam - pose.translation);
}

inline int round_pixel(double x) { return static_cast<int>(std::floor(x + 0.5)); }

inline bool pixel_in_bounds(const CameraIntrinsics& cam, const Eigen::Vector2d& uv) {
  const int col = round_pixel(uv.x());
  const int row = round_pixel(uv.y());
  return col >= 0 && row >= 0 && col < cam.width && row < cam.height;
}

/// Projection without the bounds test; the caller guarantees z > 0.
inline Eigen::Vector2d project_unchecked(const CameraIntrinsics& cam, const Eigen::Vector3d& p) {
  double x = p.x() / p.z();
  double y = p.y() / p.z();
  if (cam.model == CameraModel::SimpleRadial) {
    const double factor = 1.0 + cam.radial_k * (x * x + y * y);
    x *= factor;
    y *= factor;
  }
  return {cam.fx * x + cam.cx, cam.fy * y + cam.cy};
}

inline std::optional<Eigen::Vector2d> project(const CameraIntrinsics& cam,
                                              const Eigen::Vector3d& xyz_cam) {
  if (!(xyz_cam.z() > kMinProjectionDepth)) return std::nullopt;
  const Eigen::Vector2d uv = project_unchecked(cam, xyz_cam);
  if (!std::isfinite(uv.x()) || !std::isfinite(uv.y()) || !pixel_in_bounds(cam, uv)) {
    return std::nullopt;
  }
  return uv;
}

/// Normalized ray direction (x/z, y/z, 1) for a pixel, undoing radial distortion.
inline Eigen::Vector3d pixel_ray(const CameraIntrinsics& cam, const Eigen::Vector2d& uv) {
  const double xd = (uv.x() - cam.cx) / cam.fx;
  const double yd = (uv.y() - cam.cy) / cam.fy;
  if (cam.model != CameraModel::SimpleRadial || cam.radial_k == 0.0) return {xd, yd, 1.0};
  double x = xd;
  double y = yd;
  for (int it = 0; it < 50; ++it) {
    const double factor = 1.0 + cam.radial_k * (x * x + y * y);
    const double nx = xd / factor;
    const double ny = yd / factor;
    if (std::abs(nx - x) < 1e-15 && std::abs(ny - y) < 1e-15) break;
    x = nx;
    y = ny;
  }
  return {x, y, 1.0};
}

/// Camera-frame point seen at pixel uv with camera-frame depth z.
inline Eigen::Vector3d unproject(const CameraIntrinsics& cam, const Eigen::Vector2d& uv, double z) {
  return pixel_ray(cam, uv) * z;
}

enum class SplatMode {
  /// Place each visible point at its SfM-recorded observation pixel.
  Observed,
  /// Place each visible point where it reprojects.
  Reprojected,
};

namespace detail {

inline void splat_min(SparseDepthMap& map, const Eigen::Vector2d& uv, double z, Point3dId id) {
  const int col = round_pixel(uv.x());
  const int row = round_pixel(uv.y());
  if (!map.depth.contains(row, col)) return;
  const double current = map.depth(row, col);
  if (current > 0.0 && current <= z) return;
  map.set(row, col, z, static_cast<std::int64_t>(id));
}

}  // namespace detail

/// Renders the SfM point cloud into a per-view sparse depth map holding
/// camera-frame z. Collisions keep the nearer point.
inline SparseDepthMap render_sparse_depth(const SfmModel& model, ImageId image_id,
                                          bool use_visibility,
                                          SplatMode mode = SplatMode::Observed) {
  const PosedImage& img = model.image(image_id);
  const CameraIntrinsics& cam = model.camera_of(img);
  SparseDepthMap map(cam.width, cam.height);

  if (use_visibility) {
    for (const auto& obs : img.observations) {
      if (!obs.point3d_id) continue;
      const auto it = model.points.find(*obs.point3d_id);
      if (it == model.points.end()) {
        fail(ErrorCode::BrokenReference, std::to_string(*obs.point3d_id));
      }
      const Eigen::Vector3d pc = world_to_camera(img, it->second.xyz);
      if (!(pc.z() > kMinProjectionDepth)) continue;
      if (mode == SplatMode::Observed) {
        detail::splat_min(map, obs.xy, pc.z(), it->first);
      } else if (auto uv = project(cam, pc)) {
        detail::splat_min(map, *uv, pc.z(), it->first);
      }
    }
    return map;
  }

  for (const auto& [id, pt] : model.points) {
    const Eigen::Vector3d pc = world_to_camera(img, pt.xyz);
    if (auto uv = project(cam, pc)) detail::splat_min(map, *uv, pc.z(), id);
  }
  return map;
}

}  // namespace sfmdepth
