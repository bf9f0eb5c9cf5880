#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "mdk/camera.hpp"
#include "mdk/geometry.hpp"
#include "mdk/grid.hpp"
#include "mdk/random.hpp"

namespace mdk::synthetic {

/// Camera ray through pixel (x, y) with unit z component.
inline Vec3 pixel_ray(double x, double y, const CameraIntrinsics& intr) {
  return {(x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0};
}

/// Depth of the plane {X : n . X = offset} (camera frame). Pixels whose ray
/// misses the plane in front of the camera are invalid.
inline DepthMap render_plane(const CameraIntrinsics& intr, const Vec3& normal, double offset) {
  Grid<double> v(intr.width, intr.height, 0.0);
  Mask m(intr.width, intr.height, 0);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const double denom = normal.dot(pixel_ray(x, y, intr));
      if (denom == 0.0) continue;
      const double t = offset / denom;
      if (t > 0.0 && std::isfinite(t)) {
        v(x, y) = t;
        m(x, y) = 1;
      }
    }
  }
  return DepthMap(std::move(v), std::move(m));
}

struct Box {
  Vec3 lo;
  Vec3 hi;

  /// Distance from p to the box surface.
  double surface_distance(const Vec3& p) const {
    const Vec3 outside = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    if (outside.squaredNorm() > 0.0) return outside.norm();
    const Vec3 in = (p - lo).cwiseMin(hi - p);
    return in.minCoeff();
  }
};

/// Nearest positive ray parameter where origin + t * dir enters `box`.
inline std::optional<double> intersect(const Box& box, const Vec3& origin, const Vec3& dir) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir(a) == 0.0) {
      if (origin(a) < box.lo(a) || origin(a) > box.hi(a)) return std::nullopt;
      continue;
    }
    double ta = (box.lo(a) - origin(a)) / dir(a);
    double tb = (box.hi(a) - origin(a)) / dir(a);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t1 <= 0.0) return std::nullopt;
  return t0 > 0.0 ? t0 : t1;
}

/// Depth image of a box seen by a camera with camera-to-world `pose`.
inline DepthMap render_box(const CameraIntrinsics& intr, const Box& box, const Pose& pose) {
  Grid<double> v(intr.width, intr.height, 0.0);
  Mask m(intr.width, intr.height, 0);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const auto t = intersect(box, pose.translation, pose.rotation * pixel_ray(x, y, intr));
      if (t) {
        v(x, y) = *t;
        m(x, y) = 1;
      }
    }
  }
  return DepthMap(std::move(v), std::move(m));
}

/// Camera-to-world pose at `eye` looking at `target` (camera +z forward,
/// +y down).
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, -1, 0)) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {r, eye};
}

/// Smooth positive depth: a tilted base plus low-frequency ripples.
inline DepthMap smooth_depth(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  const double base = rng.uniform(2.0, 4.0);
  const double tilt_x = rng.uniform(-0.01, 0.01);
  const double tilt_y = rng.uniform(-0.01, 0.01);
  double amp[3], fx[3], fy[3], ph[3];
  for (int k = 0; k < 3; ++k) {
    amp[k] = rng.uniform(0.05, 0.2);
    fx[k] = rng.uniform(0.02, 0.12);
    fy[k] = rng.uniform(0.02, 0.12);
    ph[k] = rng.uniform(0.0, 6.28);
  }
  Grid<double> v(width, height, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double d = base + tilt_x * x + tilt_y * y;
      for (int k = 0; k < 3; ++k) d += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
      v(x, y) = d;
    }
  }
  return DepthMap::from_values(std::move(v));
}

/// Uniform random depth in [lo, hi), all valid.
inline DepthMap random_depth(int width, int height, std::uint64_t seed, double lo = 1.0,
                             double hi = 10.0) {
  Rng rng(seed);
  Grid<double> v(width, height, 0.0);
  for (auto& d : v) d = rng.uniform(lo, hi);
  return DepthMap::from_values(std::move(v));
}

/// Adds zero-mean Gaussian noise with relative standard deviation `sigma`.
inline DepthMap add_relative_noise(DepthMap d, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.valid[i]) d.values[i] *= 1.0 + sigma * rng.normal();
  }
  return d;
}

}  // namespace mdk::synthetic
