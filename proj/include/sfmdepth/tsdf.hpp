#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "sfmdepth/depth_map.hpp"
#include "sfmdepth/geometry.hpp"
#include "sfmdepth/marching_cubes_tables.hpp"
#include "sfmdepth/mesh.hpp"
#include "sfmdepth/parallel.hpp"
#include "sfmdepth/sfm_model.hpp"

namespace sfmdepth {

inline constexpr double kDefaultTruncationFactor = 4.0;
inline constexpr int kDefaultMaxWeight = 64;

/// Dense TSDF grid. Voxel (i, j, k) is the sample point origin + (i, j, k) *
/// voxel_size. Positive values lie in front of the observed surface.
struct TsdfVolume {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double voxel_size = 0.0;
  std::array<int, 3> dims{0, 0, 0};
  double truncation = 0.0;
  std::vector<double> tsdf;
  std::vector<double> weight;

  TsdfVolume() = default;
  TsdfVolume(const Eigen::Vector3d& origin_, double voxel, std::array<int, 3> dims_, double trunc)
      : origin(origin_), voxel_size(voxel), dims(dims_), truncation(trunc) {
    if (!(voxel > 0.0)) fail(ErrorCode::InvalidConfig, "voxel_size must be > 0");
    if (!(trunc >= voxel)) fail(ErrorCode::InvalidConfig, "truncation must be >= voxel_size");
    if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) fail(ErrorCode::InvalidConfig, "volume needs >= 2 voxels per axis");
    tsdf.assign(voxel_count(), 1.0);
    weight.assign(voxel_count(), 0.0);
  }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(i);
  }
  Eigen::Vector3d position(int i, int j, int k) const {
    return origin + voxel_size * Eigen::Vector3d(i, j, k);
  }
  bool observed() const {
    return std::any_of(weight.begin(), weight.end(), [](double w) { return w > 0.0; });
  }
};

struct VolumeBounds {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

/// Per-axis trimmed bounding box of the SfM points, padded on every side by
/// pad_fraction of the largest extent.
inline VolumeBounds auto_bounds(const SfmModel& model, double trim_fraction = 0.02,
                                double pad_fraction = 0.05) {
  if (model.points.empty()) fail(ErrorCode::InvalidConfig, "cannot size a volume from an empty point cloud");
  VolumeBounds b;
  std::vector<double> coord;
  coord.reserve(model.points.size());
  for (int axis = 0; axis < 3; ++axis) {
    coord.clear();
    for (const auto& [id, pt] : model.points) coord.push_back(pt.xyz[axis]);
    std::sort(coord.begin(), coord.end());
    const auto drop = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(coord.size())));
    b.min[axis] = coord[drop];
    b.max[axis] = coord[coord.size() - 1 - drop];
  }
  const double pad = pad_fraction * (b.max - b.min).maxCoeff();
  b.min.array() -= pad;
  b.max.array() += pad;
  return b;
}

/// Allocates a volume over `bounds` with roughly `voxel_budget` voxels.
inline TsdfVolume make_volume(const VolumeBounds& bounds, std::size_t voxel_budget,
                              double truncation_factor = kDefaultTruncationFactor) {
  const Eigen::Vector3d extent = bounds.max - bounds.min;
  if (!(extent.minCoeff() > 0.0)) fail(ErrorCode::InvalidConfig, "volume bounds have zero extent");
  if (voxel_budget < 8) fail(ErrorCode::InvalidConfig, "voxel budget too small");
  if (!(truncation_factor >= 1.0)) fail(ErrorCode::InvalidConfig, "truncation factor must be >= 1");
  const double voxel = std::cbrt(extent.prod() / static_cast<double>(voxel_budget));
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[a] = std::max(2, static_cast<int>(std::ceil(extent[a] / voxel)) + 1);
  return TsdfVolume(bounds.min, voxel, dims, truncation_factor * voxel);
}

namespace detail {

// Depth lookup at a continuous pixel: bilinear over four valid neighbours of
// similar depth, otherwise the nearest pixel.
inline std::optional<double> sample_depth(const DenseDepthMap& depth, const Eigen::Vector2d& uv) {
  const int w = depth.width();
  const int h = depth.height();
  const int u0 = static_cast<int>(std::floor(uv.x()));
  const int v0 = static_cast<int>(std::floor(uv.y()));
  if (u0 >= 0 && v0 >= 0 && u0 + 1 < w && v0 + 1 < h) {
    const std::size_t i00 = depth.depth.index(v0, u0);
    const std::size_t i01 = i00 + 1;
    const std::size_t i10 = i00 + static_cast<std::size_t>(w);
    const std::size_t i11 = i10 + 1;
    if (depth.is_valid(i00) && depth.is_valid(i01) && depth.is_valid(i10) && depth.is_valid(i11)) {
      const double d00 = depth.depth[i00];
      const double d01 = depth.depth[i01];
      const double d10 = depth.depth[i10];
      const double d11 = depth.depth[i11];
      const double lo = std::min({d00, d01, d10, d11});
      const double hi = std::max({d00, d01, d10, d11});
      if (hi <= 1.05 * lo) {
        const double fu = uv.x() - u0;
        const double fv = uv.y() - v0;
        return (1 - fv) * ((1 - fu) * d00 + fu * d01) + fv * ((1 - fu) * d10 + fu * d11);
      }
    }
  }
  const int col = round_pixel(uv.x());
  const int row = round_pixel(uv.y());
  if (!depth.depth.contains(row, col) || !depth.is_valid(row, col)) return std::nullopt;
  return depth.depth(row, col);
}

}  // namespace detail

/// KinectFusion-style update: each voxel in front of (or within truncation
/// behind) the observed surface takes a unit-weight sample of
/// clamp((d - z) / truncation, -1, 1) into its running average.
inline void integrate_in_place(TsdfVolume& volume, const DenseDepthMap& depth,
                               const CameraIntrinsics& cam, const PosedImage& pose,
                               int max_weight = kDefaultMaxWeight) {
  if (depth.domain != ScaleDomain::Metric) fail(ErrorCode::DomainMismatch, "TSDF integration needs metric depth");
  if (depth.width() != cam.width || depth.height() != cam.height) {
    fail(ErrorCode::ShapeMismatch, "depth map does not match camera size");
  }
  if (max_weight < 1) fail(ErrorCode::InvalidConfig, "max_weight must be >= 1");
  const Eigen::Matrix3d rot = pose.rotation();
  const Eigen::Vector3d trans = pose.translation;
  const double cap = static_cast<double>(max_weight);
  const double trunc = volume.truncation;

  parallel_for(static_cast<std::size_t>(volume.dims[2]), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    for (int j = 0; j < volume.dims[1]; ++j) {
      for (int i = 0; i < volume.dims[0]; ++i) {
        const Eigen::Vector3d pc = rot * volume.position(i, j, k) + trans;
        if (!(pc.z() > kMinProjectionDepth)) continue;
        const Eigen::Vector2d uv = project_unchecked(cam, pc);
        if (!pixel_in_bounds(cam, uv)) continue;
        const auto d = detail::sample_depth(depth, uv);
        if (!d) continue;
        const double s = *d - pc.z();
        if (!(s > -trunc)) continue;
        const double sample = std::clamp(s / trunc, -1.0, 1.0);
        const std::size_t idx = volume.index(i, j, k);
        const double w = volume.weight[idx];
        volume.tsdf[idx] = (volume.tsdf[idx] * w + sample) / (w + 1.0);
        volume.weight[idx] = std::min(w + 1.0, cap);
      }
    }
  });
}

inline TsdfVolume integrate(TsdfVolume volume, const DenseDepthMap& depth, const CameraIntrinsics& cam,
                            const PosedImage& pose, int max_weight = kDefaultMaxWeight) {
  integrate_in_place(volume, depth, cam, pose, max_weight);
  return volume;
}

namespace detail {

inline constexpr std::array<std::array<int, 3>, 8> kCubeCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

inline constexpr std::array<std::array<int, 2>, 12> kCubeEdge = {{
    {0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6}, {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

}  // namespace detail

/// Marching cubes at iso-level 0. Cells with any unobserved corner are skipped;
/// vertices are shared between neighbouring cells.
inline TriangleMesh extract_mesh(const TsdfVolume& volume) {
  if (!volume.observed()) fail(ErrorCode::EmptyVolume, "no observed voxels");
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  const auto [nx, ny, nz] = volume.dims;

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        std::array<double, 8> f{};
        bool observed = true;
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kCubeCorner[c];
          const std::size_t idx = volume.index(i + o[0], j + o[1], k + o[2]);
          if (volume.weight[idx] <= 0.0) {
            observed = false;
            break;
          }
          f[c] = volume.tsdf[idx];
          if (f[c] < 0.0) cube |= 1 << c;
        }
        if (!observed || detail::kEdgeTable[cube] == 0) continue;

        std::array<std::uint32_t, 12> vert{};
        for (int e = 0; e < 12; ++e) {
          if (!(detail::kEdgeTable[cube] & (1 << e))) continue;
          const int a = detail::kCubeEdge[e][0];
          const int b = detail::kCubeEdge[e][1];
          const auto& oa = detail::kCubeCorner[a];
          const auto& ob = detail::kCubeCorner[b];
          // Each cube edge is a grid edge from its lower corner along one axis.
          const int axis = ob[0] != oa[0] ? 0 : (ob[1] != oa[1] ? 1 : 2);
          const auto& lo = (ob[axis] > oa[axis]) ? oa : ob;
          const std::uint64_t key =
              static_cast<std::uint64_t>(volume.index(i + lo[0], j + lo[1], k + lo[2])) * 3 + axis;
          auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
          if (inserted) {
            const Eigen::Vector3d pa = volume.position(i + oa[0], j + oa[1], k + oa[2]);
            const Eigen::Vector3d pb = volume.position(i + ob[0], j + ob[1], k + ob[2]);
            const double t = f[a] / (f[a] - f[b]);
            mesh.vertices.push_back(pa + t * (pb - pa));
          }
          vert[e] = it->second;
        }
        const auto& tri = detail::kTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          const std::uint32_t a = vert[tri[t]];
          const std::uint32_t b = vert[tri[t + 1]];
          const std::uint32_t c = vert[tri[t + 2]];
          if (a == b || b == c || a == c) continue;
          mesh.triangles.push_back({a, b, c});
        }
      }
    }
  }
  return mesh;
}

}  // namespace sfmdepth
