#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sfmdepth/error.hpp"

namespace sfmdepth {

using CameraId = std::uint32_t;
using ImageId = std::uint32_t;
using Point3dId = std::uint64_t;

// Numeric ids follow the COLMAP model registry.
enum class CameraModel : int { SimplePinhole = 0, Pinhole = 1, SimpleRadial = 2 };

inline std::string camera_model_name(CameraModel m) {
  switch (m) {
    case CameraModel::SimplePinhole: return "SIMPLE_PINHOLE";
    case CameraModel::Pinhole: return "PINHOLE";
    case CameraModel::SimpleRadial: return "SIMPLE_RADIAL";
  }
  return "UNKNOWN";
}

inline CameraModel camera_model_from_name(const std::string& name) {
  if (name == "SIMPLE_PINHOLE") return CameraModel::SimplePinhole;
  if (name == "PINHOLE") return CameraModel::Pinhole;
  if (name == "SIMPLE_RADIAL") return CameraModel::SimpleRadial;
  fail(ErrorCode::UnsupportedCameraModel, name);
}

inline CameraModel camera_model_from_id(int id) {
  if (id >= 0 && id <= 2) return static_cast<CameraModel>(id);
  fail(ErrorCode::UnsupportedCameraModel, "model id " + std::to_string(id));
}

inline std::size_t camera_model_num_params(CameraModel m) {
  switch (m) {
    case CameraModel::SimplePinhole: return 3;
    case CameraModel::Pinhole: return 4;
    case CameraModel::SimpleRadial: return 4;
  }
  return 0;
}

struct CameraIntrinsics {
  CameraId camera_id = 0;
  CameraModel model = CameraModel::Pinhole;
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double radial_k = 0.0;

  /// Parameter vector in COLMAP order for this model.
  std::vector<double> params() const {
    switch (model) {
      case CameraModel::SimplePinhole: return {fx, cx, cy};
      case CameraModel::Pinhole: return {fx, fy, cx, cy};
      case CameraModel::SimpleRadial: return {fx, cx, cy, radial_k};
    }
    return {};
  }

  static CameraIntrinsics from_params(CameraId id, CameraModel model, int width,
                                      int height, const std::vector<double>& p) {
    if (p.size() != camera_model_num_params(model)) {
      fail(ErrorCode::MalformedRecord,
           "camera " + std::to_string(id) + ": expected " +
               std::to_string(camera_model_num_params(model)) + " params, got " +
               std::to_string(p.size()));
    }
    CameraIntrinsics c;
    c.camera_id = id;
    c.model = model;
    c.width = width;
    c.height = height;
    switch (model) {
      case CameraModel::SimplePinhole:
        c.fx = c.fy = p[0];
        c.cx = p[1];
        c.cy = p[2];
        break;
      case CameraModel::Pinhole:
        c.fx = p[0];
        c.fy = p[1];
        c.cx = p[2];
        c.cy = p[3];
        break;
      case CameraModel::SimpleRadial:
        c.fx = c.fy = p[0];
        c.cx = p[1];
        c.cy = p[2];
        c.radial_k = p[3];
        break;
    }
    return c;
  }

  void validate() const {
    const auto where = "camera " + std::to_string(camera_id) + ": ";
    if (!(width > 0 && height > 0)) fail(ErrorCode::MalformedRecord, where + "non-positive size");
    if (!(fx > 0.0 && fy > 0.0)) fail(ErrorCode::MalformedRecord, where + "non-positive focal");
    if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
      fail(ErrorCode::MalformedRecord, where + "principal point outside image");
    }
    if (model != CameraModel::Pinhole && fx != fy) {
      fail(ErrorCode::MalformedRecord, where + "single-focal model with fx != fy");
    }
    if (model != CameraModel::SimpleRadial && radial_k != 0.0) {
      fail(ErrorCode::MalformedRecord, where + "distortion on undistorted model");
    }
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

struct Observation {
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
  std::optional<Point3dId> point3d_id;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct PosedImage {
  ImageId image_id = 0;
  CameraId camera_id = 0;
  /// World-to-camera rotation as (qw, qx, qy, qz).
  std::array<double, 4> qvec{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::string name;
  std::vector<Observation> observations;

  Eigen::Quaterniond quaternion() const {
    return Eigen::Quaterniond(qvec[0], qvec[1], qvec[2], qvec[3]);
  }
  Eigen::Matrix3d rotation() const { return quaternion().toRotationMatrix(); }

  /// Camera center in world coordinates.
  Eigen::Vector3d center() const { return -(rotation().transpose() * translation); }

  void set_rotation(const Eigen::Matrix3d& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    qvec = {q.w(), q.x(), q.y(), q.z()};
  }

  friend bool operator==(const PosedImage&, const PosedImage&) = default;
};

struct TrackElement {
  ImageId image_id = 0;
  std::uint32_t point2d_idx = 0;

  friend auto operator<=>(const TrackElement&, const TrackElement&) = default;
};

struct ScenePoint {
  Point3dId point3d_id = 0;
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  std::array<std::uint8_t, 3> color{128, 128, 128};
  double reproj_error = 0.0;
  std::vector<TrackElement> track;

  friend bool operator==(const ScenePoint&, const ScenePoint&) = default;
};

inline constexpr double kQuaternionNormTolerance = 1e-9;

/// Cameras, posed images and triangulated points of one sparse
/// reconstruction. Maps are ordered so that serialization is deterministic.
struct SfmModel {
  std::map<CameraId, CameraIntrinsics> cameras;
  std::map<ImageId, PosedImage> images;
  std::map<Point3dId, ScenePoint> points;

  const PosedImage& image(ImageId id) const {
    auto it = images.find(id);
    if (it == images.end()) fail(ErrorCode::UnknownImage, "image " + std::to_string(id));
    return it->second;
  }

  const CameraIntrinsics& camera_of(const PosedImage& img) const {
    auto it = cameras.find(img.camera_id);
    if (it == cameras.end()) {
      fail(ErrorCode::BrokenReference, "camera " + std::to_string(img.camera_id));
    }
    return it->second;
  }

  std::optional<ImageId> find_image_by_name(const std::string& name) const {
    for (const auto& [id, img] : images) {
      if (img.name == name) return id;
    }
    return std::nullopt;
  }

  /// Throws on the first violated invariant.
  void validate() const {
    if (images.empty()) fail(ErrorCode::MalformedRecord, "model has no images");
    for (const auto& [id, cam] : cameras) {
      if (id != cam.camera_id) fail(ErrorCode::MalformedRecord, "camera key mismatch");
      cam.validate();
    }
    for (const auto& [id, img] : images) {
      if (id != img.image_id) fail(ErrorCode::MalformedRecord, "image key mismatch");
      if (!cameras.contains(img.camera_id)) {
        fail(ErrorCode::BrokenReference, std::to_string(img.camera_id));
      }
      const double norm = std::sqrt(img.qvec[0] * img.qvec[0] + img.qvec[1] * img.qvec[1] +
                                    img.qvec[2] * img.qvec[2] + img.qvec[3] * img.qvec[3]);
      if (std::abs(norm - 1.0) > kQuaternionNormTolerance) {
        fail(ErrorCode::MalformedRecord,
             "image " + std::to_string(id) + ": quaternion is not unit");
      }
      for (const auto& obs : img.observations) {
        if (obs.point3d_id && !points.contains(*obs.point3d_id)) {
          fail(ErrorCode::BrokenReference, std::to_string(*obs.point3d_id));
        }
      }
    }
    std::set<std::pair<ImageId, std::uint32_t>> tracked;
    for (const auto& [id, pt] : points) {
      if (id != pt.point3d_id) fail(ErrorCode::MalformedRecord, "point key mismatch");
      if (pt.track.empty()) {
        fail(ErrorCode::MalformedRecord, "point " + std::to_string(id) + ": empty track");
      }
      for (const auto& el : pt.track) {
        auto it = images.find(el.image_id);
        if (it == images.end()) fail(ErrorCode::BrokenReference, std::to_string(el.image_id));
        const auto& obs = it->second.observations;
        if (el.point2d_idx >= obs.size() || obs[el.point2d_idx].point3d_id != id) {
          fail(ErrorCode::BrokenReference,
               std::to_string(id) + " (track entry image " + std::to_string(el.image_id) +
                   " idx " + std::to_string(el.point2d_idx) + ")");
        }
        tracked.emplace(el.image_id, el.point2d_idx);
      }
    }
    for (const auto& [id, img] : images) {
      for (std::uint32_t i = 0; i < img.observations.size(); ++i) {
        if (img.observations[i].point3d_id && !tracked.contains({id, i})) {
          fail(ErrorCode::BrokenReference,
               std::to_string(*img.observations[i].point3d_id) + " (untracked observation)");
        }
      }
    }
  }

  friend bool operator==(const SfmModel&, const SfmModel&) = default;
};

}  // namespace sfmdepth
