#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sfmdepth/sfmdepth.hpp"
#include "test_util.hpp"

using namespace sfmdepth;

namespace {

CameraIntrinsics pinhole(int w, int h, double f, double cx, double cy) {
  return CameraIntrinsics::from_params(1, CameraModel::Pinhole, w, h, {f, f, cx, cy});
}

SfmModel single_view_model(const CameraIntrinsics& cam) {
  SfmModel m;
  m.cameras.emplace(cam.camera_id, cam);
  PosedImage img;
  img.image_id = 1;
  img.camera_id = cam.camera_id;
  img.name = "a.png";
  m.images.emplace(1, img);
  return m;
}

void add_point(SfmModel& m, Point3dId id, const Eigen::Vector3d& xyz, std::optional<Eigen::Vector2d> obs_in_1) {
  ScenePoint pt;
  pt.point3d_id = id;
  pt.xyz = xyz;
  if (obs_in_1) {
    auto& img = m.images.at(1);
    pt.track.push_back({1, static_cast<std::uint32_t>(img.observations.size())});
    img.observations.push_back({*obs_in_1, id});
  } else {
    // Tracked by a second image so the point is valid but not seen by image 1.
    if (!m.images.contains(2)) {
      PosedImage other = m.images.at(1);
      other.image_id = 2;
      other.name = "b.png";
      other.observations.clear();
      m.images.emplace(2, other);
    }
    auto& img = m.images.at(2);
    pt.track.push_back({2, static_cast<std::uint32_t>(img.observations.size())});
    img.observations.push_back({Eigen::Vector2d(1, 1), id});
  }
  m.points.emplace(id, pt);
}

}  // namespace

TEST(Geometry, WorldToCameraExamples) {
  PosedImage pose;
  EXPECT_EQ(world_to_camera(pose, {1, 2, 3}), Eigen::Vector3d(1, 2, 3));

  pose.qvec = {0, 0, 0, 1};  // 180 deg about z
  const Eigen::Vector3d r = world_to_camera(pose, {1, 0, 0});
  EXPECT_NEAR(r.x(), -1.0, 1e-15);
  EXPECT_NEAR(r.y(), 0.0, 1e-15);
  EXPECT_NEAR(r.z(), 0.0, 1e-15);

  PosedImage shifted;
  shifted.translation = {0, 0, 5};
  EXPECT_EQ(world_to_camera(shifted, Eigen::Vector3d::Zero()), Eigen::Vector3d(0, 0, 5));
}

TEST(Geometry, CameraToWorldInverts) {
  PosedImage pose;
  Eigen::Quaterniond q(0.3, -0.2, 0.9, 0.1);
  q.normalize();
  pose.qvec = {q.w(), q.x(), q.y(), q.z()};
  pose.translation = {0.4, -1.2, 3.0};
  const Eigen::Vector3d x(0.7, 2.5, -1.1);
  EXPECT_LT((camera_to_world(pose, world_to_camera(pose, x)) - x).norm(), 1e-14);
  EXPECT_LT((world_to_camera(pose, pose.center())).norm(), 1e-14);
}

TEST(Geometry, ProjectExamples) {
  const auto cam = pinhole(200, 200, 100, 50, 50);
  const auto pp = project(cam, {0, 0, 4});
  ASSERT_TRUE(pp);
  EXPECT_EQ(*pp, Eigen::Vector2d(50, 50));

  const auto p = project(cam, {1, 1, 2});
  ASSERT_TRUE(p);
  EXPECT_EQ(*p, Eigen::Vector2d(100, 100));

  EXPECT_FALSE(project(cam, {1, 1, 0}));
  EXPECT_FALSE(project(cam, {0, 0, -1}));
  EXPECT_FALSE(project(cam, {0, 0, 0.5e-6}));
  EXPECT_FALSE(project(cam, {10, 0, 1}));  // u = 1050
}

TEST(Geometry, ProjectBoundsFollowPixelRounding) {
  const auto cam = pinhole(10, 10, 1, 0, 0);
  // Pixel centers sit at integers; a coordinate belongs to the pixel it rounds to.
  EXPECT_TRUE(project(cam, {-0.5, 0, 1}));
  EXPECT_FALSE(project(cam, {-0.5000001, 0, 1}));
  EXPECT_TRUE(project(cam, {9.4999, 9.4999, 1}));
  EXPECT_FALSE(project(cam, {9.5, 0, 1}));
}

TEST(Geometry, SimpleRadialDistortsBeforeIntrinsics) {
  const auto cam = CameraIntrinsics::from_params(1, CameraModel::SimpleRadial, 400, 300, {200, 200, 150, 0.1});
  const Eigen::Vector3d p(0.5, -0.25, 2.0);
  const double x = 0.25, y = -0.125, r2 = x * x + y * y;
  const auto uv = project(cam, p);
  ASSERT_TRUE(uv);
  EXPECT_NEAR(uv->x(), 200 * x * (1 + 0.1 * r2) + 200, 1e-12);
  EXPECT_NEAR(uv->y(), 200 * y * (1 + 0.1 * r2) + 150, 1e-12);

  // pixel_ray undoes the distortion.
  const Eigen::Vector3d ray = pixel_ray(cam, *uv);
  EXPECT_NEAR(ray.z(), 1.0, 0.0);
  EXPECT_NEAR(ray.x(), x, 1e-12);
  EXPECT_NEAR(ray.y(), y, 1e-12);
  const Eigen::Vector3d back = unproject(cam, *uv, 2.0);
  EXPECT_LT((back - p).norm(), 1e-11);
}

TEST(Geometry, RenderSparseDepthRoundsObservedPixel) {
  const auto cam = pinhole(64, 48, 50, 32, 24);
  SfmModel m = single_view_model(cam);
  const Eigen::Vector2d obs(10.4, 20.6);
  add_point(m, 5, unproject(cam, obs, 3.2), obs);
  const SparseDepthMap d = render_sparse_depth(m, 1, true);
  EXPECT_DOUBLE_EQ(d.depth(21, 10), 3.2);
  EXPECT_EQ(d.source_point(21, 10), 5);
  EXPECT_EQ(d.count(), 1u);
}

TEST(Geometry, RenderSparseDepthGatesOnVisibility) {
  const auto cam = pinhole(64, 48, 50, 32, 24);
  SfmModel m = single_view_model(cam);
  add_point(m, 1, {0, 0, 3}, std::nullopt);
  EXPECT_EQ(render_sparse_depth(m, 1, true).count(), 0u);
  const SparseDepthMap all = render_sparse_depth(m, 1, false);
  EXPECT_EQ(all.count(), 1u);
  EXPECT_DOUBLE_EQ(all.depth(24, 32), 3.0);
}

TEST(Geometry, RenderSparseDepthCollisionKeepsNearest) {
  const auto cam = pinhole(64, 48, 50, 32, 24);
  SfmModel m = single_view_model(cam);
  add_point(m, 1, unproject(cam, {7, 8}, 5.0), Eigen::Vector2d(7, 8));
  add_point(m, 2, unproject(cam, {7.2, 8.1}, 2.0), Eigen::Vector2d(7.2, 8.1));
  const SparseDepthMap d = render_sparse_depth(m, 1, true);
  EXPECT_EQ(d.count(), 1u);
  EXPECT_DOUBLE_EQ(d.depth(8, 7), 2.0);
  EXPECT_EQ(d.source_point(8, 7), 2);
}

TEST(Geometry, RenderSparseDepthUnknownImage) {
  const SfmModel m = single_view_model(pinhole(8, 8, 5, 4, 4));
  EXPECT_SFM_ERROR(render_sparse_depth(m, 42, true), ErrorCode::UnknownImage);
}

TEST(Geometry, ReprojectedModeUsesProjection) {
  const auto cam = pinhole(64, 48, 50, 32, 24);
  SfmModel m = single_view_model(cam);
  // SfM observation off by 3 px from where the point reprojects.
  add_point(m, 1, unproject(cam, {20, 20}, 4.0), Eigen::Vector2d(23, 20));
  EXPECT_GT(render_sparse_depth(m, 1, true, SplatMode::Observed).depth(20, 23), 0.0);
  const auto re = render_sparse_depth(m, 1, true, SplatMode::Reprojected);
  EXPECT_DOUBLE_EQ(re.depth(20, 20), 4.0);
  EXPECT_EQ(re.count(), 1u);
}

TEST(Geometry, RenderPropertiesOnSyntheticScenes) {
  for (auto shape : {SceneShape::Plane, SceneShape::Sphere, SceneShape::Room}) {
    SceneSpec spec;
    spec.shape = shape;
    spec.n_views = 4;
    spec.width = 48;
    spec.height = 36;
    spec.sparse_density = 60;
    spec.noise_depth = 0.01;
    spec.outlier_fraction = 0.1;
    spec.seed = 17;
    const SyntheticScene s = generate(spec);
    for (const auto& [id, img] : s.model.images) {
      const auto& cam = s.model.camera_of(img);
      const SparseDepthMap vis = render_sparse_depth(s.model, id, true);
      const SparseDepthMap all = render_sparse_depth(s.model, id, false);
      for (int r = 0; r < vis.height(); ++r) {
        for (int c = 0; c < vis.width(); ++c) {
          EXPECT_GE(vis.depth(r, c), 0.0);
          EXPECT_GE(all.depth(r, c), 0.0);
          EXPECT_EQ(vis.has(r, c), vis.source_point(r, c) != kNoSourcePoint);
          if (!vis.has(r, c)) continue;
          // Gating monotonicity.
          EXPECT_TRUE(all.has(r, c));
          // Projection consistency.
          const auto& pt = s.model.points.at(static_cast<Point3dId>(vis.source_point(r, c)));
          const auto uv = project(cam, world_to_camera(img, pt.xyz));
          ASSERT_TRUE(uv);
          EXPECT_LE(std::abs(uv->x() - c), 0.5 + 1e-9);
          EXPECT_LE(std::abs(uv->y() - r), 0.5 + 1e-9);
        }
      }
    }
  }
}
