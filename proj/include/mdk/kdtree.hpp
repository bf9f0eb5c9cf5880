#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "mdk/grid.hpp"

namespace mdk {

/// Euclidean distance, evaluated as sqrt(dx*dx + dy*dy + dz*dz) in that order
/// everywhere a distance is reported.
inline double point_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double point_distance_sq(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

struct Neighbor {
  std::size_t index = 0;
  double distance = std::numeric_limits<double>::infinity();
};

/// Static 3D tree for exact nearest-neighbor queries. Ties go to the lowest
/// point index, so results match an exhaustive scan.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) root_ = build(0, order_.size());
  }

  std::size_t size() const noexcept { return points_.size(); }

  Neighbor nearest(const Vec3& q) const {
    Neighbor best;
    double best_sq = std::numeric_limits<double>::infinity();
    if (root_ >= 0) search(root_, q, best.index, best_sq);
    if (std::isfinite(best_sq)) best.distance = point_distance(q, points_[best.index]);
    return best;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi(axis) == lo(axis)) return id;  // all coincident

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return points_[a](axis) < points_[b](axis); });
    const double split = points_[order_[mid]](axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  void search(int id, const Vec3& q, std::size_t& best, double& best_sq) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const double d = point_distance_sq(q, points_[idx]);
        if (d < best_sq || (d == best_sq && idx < best)) {
          best_sq = d;
          best = idx;
        }
      }
      return;
    }
    // Left holds values <= split, right values >= split.
    const double diff = q(n.axis) - n.split;
    const int first = diff <= 0.0 ? n.left : n.right;
    const int second = diff <= 0.0 ? n.right : n.left;
    search(first, q, best, best_sq);
    if (diff * diff <= best_sq) search(second, q, best, best_sq);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mdk
