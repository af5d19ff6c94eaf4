#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "sfmdepth/depth_map.hpp"
#include "sfmdepth/geometry.hpp"
#include "sfmdepth/mesh.hpp"
#include "sfmdepth/parallel.hpp"
#include "sfmdepth/sfm_model.hpp"

namespace sfmdepth {

struct ConsistencyParams {
  int n_views = 1;
  double pixel_tol = 1.0;
  /// Relative: |d_ref - d_reproj| / d_ref.
  double depth_tol = 0.01;
};

struct ViewDepth {
  ImageId image_id = 0;
  DenseDepthMap depth;
};

/// Back-projects every valid pixel and keeps it when at least n_views other
/// views agree: the point lands on a valid pixel there whose depth,
/// back-projected and reprojected into the source view, falls within
/// pixel_tol of the source pixel and depth_tol of the source depth. Kept
/// points are the mean of the source point and its supporting points.
inline FusedPointCloud fuse_point_cloud(const std::vector<ViewDepth>& views, const SfmModel& model,
                                        const ConsistencyParams& consistency) {
  if (consistency.n_views < 0) fail(ErrorCode::InvalidConfig, "n_views must be >= 0");
  if (views.size() < static_cast<std::size_t>(std::max(consistency.n_views, 1))) {
    fail(ErrorCode::TooFewViews, std::to_string(views.size()) + " view(s), need " +
                                     std::to_string(std::max(consistency.n_views, 1)));
  }
  struct Prepared {
    const PosedImage* pose;
    const CameraIntrinsics* cam;
    const DenseDepthMap* depth;
  };
  std::vector<Prepared> prep;
  prep.reserve(views.size());
  for (const auto& v : views) {
    const PosedImage& img = model.image(v.image_id);
    const CameraIntrinsics& cam = model.camera_of(img);
    if (v.depth.domain != ScaleDomain::Metric) fail(ErrorCode::DomainMismatch, "fusion needs metric depth");
    if (v.depth.width() != cam.width || v.depth.height() != cam.height) {
      fail(ErrorCode::ShapeMismatch, "depth of image " + std::to_string(v.image_id) + " does not match its camera");
    }
    prep.push_back({&img, &cam, &v.depth});
  }

  std::vector<std::vector<FusedPoint>> per_view(views.size());
  parallel_for(views.size(), [&](std::size_t vi) {
    const auto& src = prep[vi];
    auto& out = per_view[vi];
    for (int r = 0; r < src.depth->height(); ++r) {
      for (int c = 0; c < src.depth->width(); ++c) {
        if (!src.depth->is_valid(r, c)) continue;
        const double d = src.depth->depth(r, c);
        const Eigen::Vector2d uv_src(c, r);
        const Eigen::Vector3d x = camera_to_world(*src.pose, unproject(*src.cam, uv_src, d));
        Eigen::Vector3d sum = x;
        std::uint32_t support = 0;
        for (std::size_t vj = 0; vj < prep.size(); ++vj) {
          if (vj == vi) continue;
          const auto& dst = prep[vj];
          const auto uv = project(*dst.cam, world_to_camera(*dst.pose, x));
          if (!uv) continue;
          const int qc = round_pixel(uv->x());
          const int qr = round_pixel(uv->y());
          if (!dst.depth->is_valid(qr, qc)) continue;
          const Eigen::Vector3d xj =
              camera_to_world(*dst.pose, unproject(*dst.cam, Eigen::Vector2d(qc, qr), dst.depth->depth(qr, qc)));
          const Eigen::Vector3d back = world_to_camera(*src.pose, xj);
          if (!(back.z() > kMinProjectionDepth)) continue;
          const double pix_err = (project_unchecked(*src.cam, back) - uv_src).norm();
          const double depth_err = std::abs(back.z() - d) / d;
          if (pix_err <= consistency.pixel_tol && depth_err <= consistency.depth_tol) {
            ++support;
            sum += xj;
          }
        }
        if (support >= static_cast<std::uint32_t>(consistency.n_views)) {
          out.push_back({sum / static_cast<double>(support + 1), support});
        }
      }
    }
  });

  FusedPointCloud cloud;
  for (auto& pts : per_view) cloud.points.insert(cloud.points.end(), pts.begin(), pts.end());
  return cloud;
}

}  // namespace sfmdepth
