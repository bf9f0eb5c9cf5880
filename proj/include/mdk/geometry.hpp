#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "mdk/camera.hpp"
#include "mdk/error.hpp"
#include "mdk/grid.hpp"

namespace mdk {

using Color = std::array<std::uint8_t, 3>;

/// Unordered points in meters. `normals` and `colors` are either empty or
/// one entry per point.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<Color> colors;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_normals() const noexcept { return !normals.empty(); }
  bool has_colors() const noexcept { return !colors.empty(); }

  void append(const PointCloud& other) {
    const bool keep_normals = (empty() || has_normals()) && other.has_normals();
    const bool keep_colors = (empty() || has_colors()) && other.has_colors();
    if (!keep_normals) normals.clear();
    if (!keep_colors) colors.clear();
    points.insert(points.end(), other.points.begin(), other.points.end());
    if (keep_normals) normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    if (keep_colors) colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  }
};

/// Per-pixel unit normals in camera coordinates. Valid normals face the
/// camera: n . ray < 0, so a fronto-parallel surface has n = (0, 0, -1).
struct NormalMap {
  Grid<Vec3> vectors;
  Mask valid;

  NormalMap() = default;
  NormalMap(int width, int height)
      : vectors(width, height, Vec3::Zero()), valid(width, height, 0) {}
  NormalMap(Grid<Vec3> v, Mask m) : vectors(std::move(v)), valid(std::move(m)) {
    MDK_CHECK(vectors.same_shape(valid), ErrorCode::kShapeMismatch,
              "normal vectors and mask differ in shape");
  }

  int width() const noexcept { return vectors.width(); }
  int height() const noexcept { return vectors.height(); }
};

/// Rigid transform p' = R p + t. Poses read from disk are camera-to-world.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  /// Throws unless R is orthonormal with det +1 within `tol`.
  static Pose make(const Mat3& r, const Vec3& t, double tol = 1e-9) {
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    MDK_CHECK(ortho <= tol, ErrorCode::kInvalidArgument, "rotation is not orthonormal");
    MDK_CHECK(std::abs(r.determinant() - 1.0) <= tol, ErrorCode::kInvalidArgument,
              "rotation determinant is not +1");
    return {r, t};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Pose inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// (this * other)(p) = this(other(p)).
  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

namespace detail {

inline Vec3 backproject_pixel(int x, int y, double depth, const CameraIntrinsics& intr) {
  return {(x - intr.cx) * depth / intr.fx, (y - intr.cy) * depth / intr.fy, depth};
}

}  // namespace detail

inline PointCloud depth_to_pointcloud(const DepthMap& depth, const CameraIntrinsics& intr,
                                      int stride = 1) {
  intr.validate();
  MDK_CHECK(stride >= 1, ErrorCode::kInvalidArgument, "stride must be >= 1");
  PointCloud cloud;
  for (int y = 0; y < depth.height(); y += stride) {
    for (int x = 0; x < depth.width(); x += stride) {
      if (!depth.is_valid(x, y)) continue;
      const double d = depth.values(x, y);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      cloud.points.push_back(detail::backproject_pixel(x, y, d, intr));
    }
  }
  return cloud;
}

inline constexpr int kDefaultNormalWindow = 5;
inline constexpr int kMinNormalNeighbors = 6;

/// Least-squares normals: a total-least-squares plane is fitted to the
/// back-projected points of each window. Pixels with fewer than six valid
/// neighbors, or whose fit has no unique smallest eigen-direction, are
/// marked invalid.
inline NormalMap normals_from_depth(const DepthMap& depth, const CameraIntrinsics& intr,
                                    int window = kDefaultNormalWindow) {
  intr.validate();
  MDK_CHECK(window == 3 || window == 5 || window == 7, ErrorCode::kInvalidArgument,
            "window must be 3, 5 or 7");
  const int w = depth.width();
  const int h = depth.height();
  const int r = window / 2;

  // Back-project once.
  Grid<Vec3> pts(w, h, Vec3::Zero());
  Mask ok(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth.values(x, y);
      if (depth.is_valid(x, y) && d > 0.0 && std::isfinite(d)) {
        pts(x, y) = detail::backproject_pixel(x, y, d, intr);
        ok(x, y) = 1;
      }
    }
  }

  NormalMap out(w, h);
  std::vector<Vec3> local;
  local.reserve(static_cast<std::size_t>(window * window));
  Eigen::SelfAdjointEigenSolver<Mat3> solver;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!ok(x, y)) continue;
      local.clear();
      int neighbors = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int qx = x + dx;
          const int qy = y + dy;
          if (!ok.contains(qx, qy) || !ok(qx, qy)) continue;
          local.push_back(pts(qx, qy));
          if (dx != 0 || dy != 0) ++neighbors;
        }
      }
      if (neighbors < kMinNormalNeighbors) continue;

      Vec3 mean = Vec3::Zero();
      for (const auto& p : local) mean += p;
      mean /= static_cast<double>(local.size());
      Mat3 cov = Mat3::Zero();
      for (const auto& p : local) {
        const Vec3 c = p - mean;
        cov.noalias() += c * c.transpose();
      }
      solver.compute(cov);
      if (solver.info() != Eigen::Success) continue;
      const Vec3& ev = solver.eigenvalues();  // ascending
      // Relative test keeps the validity decision independent of depth scale.
      if (!(ev(2) > 0.0) || ev(1) - ev(0) <= 1e-12 * ev(2)) continue;

      Vec3 n = solver.eigenvectors().col(0).normalized();
      const Vec3& ray = pts(x, y);
      const double facing = n.dot(ray);
      if (facing > 0.0 || (facing == 0.0 && n.z() > 0.0)) n = -n;
      out.vectors(x, y) = n;
      out.valid(x, y) = 1;
    }
  }
  return out;
}

inline PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = pose.apply(p);
  for (auto& n : out.normals) n = pose.rotation * n;
  return out;
}

struct Frame {
  DepthMap depth;
  CameraIntrinsics intr;
  Pose pose;  // camera-to-world
};

/// Back-projects every frame and moves it into the world frame.
inline PointCloud fuse_frames(const std::vector<Frame>& frames, int stride = 1) {
  MDK_CHECK(!frames.empty(), ErrorCode::kEmptyInput, "no frames to fuse");
  PointCloud fused;
  for (const auto& f : frames) {
    fused.append(transform_cloud(depth_to_pointcloud(f.depth, f.intr, stride), f.pose));
  }
  return fused;
}

/// Rotation of `angle` radians about `axis` (Rodrigues).
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  const Vec3 k = axis.normalized();
  Mat3 kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * kx * kx;
}

}  // namespace mdk
