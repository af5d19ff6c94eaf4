#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Core>

namespace sfmdepth {

inline double squared_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Static 3D kd-tree for exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 1);
      build(0, static_cast<std::uint32_t>(points_.size()));
    }
  }

  std::size_t size() const { return points_.size(); }

  struct Hit {
    std::uint32_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  Hit nearest(const Eigen::Vector3d& q) const {
    Hit best;
    if (points_.empty()) return best;
    search(0, q, best);
    return best;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end, 0, 0, -1, 0.0});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (!(hi[axis] > lo[axis])) return id;  // all points coincide

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis] ||
                              (points_[a][axis] == points_[b][axis] && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::uint32_t id, const Eigen::Vector3d& q, Hit& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t p = order_[i];
        const double d2 = squared_distance(points_[p], q);
        if (d2 < best.squared_distance || (d2 == best.squared_distance && p < best.index)) {
          best = {p, d2};
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::uint32_t near = diff < 0.0 ? n.left : n.right;
    const std::uint32_t far = diff < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best.squared_distance) search(far, q, best);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace sfmdepth
