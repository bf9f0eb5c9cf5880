#pragma once

#include <any>
#include <cmath>
#include <functional>
#include <vector>

#include "mdk/camera.hpp"
#include "mdk/error.hpp"
#include "mdk/geometry.hpp"
#include "mdk/grid.hpp"
#include "mdk/resize.hpp"

namespace mdk {

/// Low-resolution iterate: canonical depth, unnormalized normals and
/// whatever the update operator wants to carry between steps.
struct RefineState {
  DepthMap depth_c;
  Grid<Vec3> normal_u;
  std::any hidden;
  int step = 0;

  int width() const noexcept { return depth_c.width(); }
  int height() const noexcept { return depth_c.height(); }
};

/// Residuals emitted by one operator call.
struct RefineUpdate {
  Grid<double> delta_depth;
  Grid<Vec3> delta_normal;
  std::any hidden;
};

/// Must be deterministic and return grids at the state's resolution.
using UpdateOperator = std::function<RefineUpdate(const RefineState&)>;

inline constexpr int kIntermediateDownscale = 4;
inline constexpr int kDefaultRefineSteps = 4;

/// Adds the residuals. No clamping or normalization happens here.
inline RefineState apply_update(const RefineState& state, RefineUpdate update) {
  MDK_CHECK(state.normal_u.same_shape(state.depth_c.values), ErrorCode::kShapeMismatch,
            "state depth and normal grids differ in shape");
  MDK_CHECK(update.delta_depth.same_shape(state.depth_c.values) &&
                update.delta_normal.same_shape(state.depth_c.values),
            ErrorCode::kShapeMismatch, "update resolution differs from the state");
  RefineState next;
  next.depth_c = state.depth_c;
  next.normal_u = state.normal_u;
  for (std::size_t i = 0; i < next.depth_c.values.size(); ++i) {
    next.depth_c.values[i] += update.delta_depth[i];
    next.normal_u[i] += update.delta_normal[i];
  }
  next.hidden = std::move(update.hidden);
  next.step = state.step + 1;
  return next;
}

/// Runs T + 1 updates. Element 0 is `init`, element k the state after k updates.
inline std::vector<RefineState> run_refinement(const RefineState& init, const UpdateOperator& op,
                                               int steps) {
  MDK_CHECK(steps >= 0, ErrorCode::kInvalidArgument, "steps must be >= 0");
  std::vector<RefineState> trajectory;
  trajectory.reserve(static_cast<std::size_t>(steps) + 2);
  trajectory.push_back(init);
  for (int t = 0; t <= steps; ++t) {
    trajectory.push_back(apply_update(trajectory.back(), op(trajectory.back())));
  }
  return trajectory;
}

/// Operator emitting zero residuals; the hidden state is carried through.
inline UpdateOperator zero_operator() {
  return [](const RefineState& s) {
    return RefineUpdate{Grid<double>(s.width(), s.height(), 0.0),
                        Grid<Vec3>(s.width(), s.height(), Vec3::Zero()), s.hidden};
  };
}

/// Normalized view of a state's normals (zero-length vectors invalid).
inline NormalMap normalized_normals(const Grid<Vec3>& normal_u) {
  NormalMap out(normal_u.width(), normal_u.height());
  for (std::size_t i = 0; i < normal_u.size(); ++i) {
    const double len = normal_u[i].norm();
    if (len < 1e-12 || !std::isfinite(len)) continue;
    out.vectors[i] = normal_u[i] / len;
    out.valid[i] = 1;
  }
  return out;
}

struct FinalOutput {
  DepthMap depth;
  NormalMap normals;
};

/// Upsamples, applies ReLU to depth and normalizes normals, then undoes the
/// canonical transform recorded in `bundle`. Normals shorter than 1e-12 are
/// marked invalid.
inline FinalOutput finalize(const RefineState& state, int upsample_factor,
                            const CanonicalBundle& bundle) {
  MDK_CHECK(upsample_factor >= 1, ErrorCode::kInvalidArgument, "upsample factor must be >= 1");
  const int w = state.width() * upsample_factor;
  const int h = state.height() * upsample_factor;

  Grid<double> depth_up = upsample_factor == 1
                              ? state.depth_c.values
                              : resize_bilinear(state.depth_c.values, w, h, &state.depth_c.valid, 0.0);
  Mask valid_up = upsample_factor == 1 ? state.depth_c.valid : resize_nearest(state.depth_c.valid, w, h);
  for (auto& d : depth_up) d = std::max(d, 0.0);
  DepthMap depth_c(std::move(depth_up), std::move(valid_up));

  Grid<Vec3> normal_up = upsample_factor == 1
                             ? state.normal_u
                             : resize_bilinear(state.normal_u, w, h, nullptr, Vec3::Zero().eval());

  FinalOutput out;
  out.depth = decanonicalize(depth_c, bundle);
  if (bundle.mode == CanonicalMode::kImage &&
      (out.depth.width() != w || out.depth.height() != h)) {
    normal_up = resize_bilinear(normal_up, out.depth.width(), out.depth.height(), nullptr,
                                Vec3::Zero().eval());
  }
  out.normals = normalized_normals(normal_up);
  return out;
}

/// Reference update rule used without learned weights.
struct ConsistencyDescentConfig {
  /// Fraction of the gap closed per step, for normals and depth alike.
  double step_size = 0.5;
  /// Real camera at the state's resolution.
  CameraIntrinsics intr;
  int window = kDefaultNormalWindow;
};

/// Moves normals toward the least-squares normals of the current depth and
/// nudges each depth toward the planes through its 3x3 neighbors that carry
/// the pixel's current normal. The hidden state holds the last pseudo-normal
/// map. Canonical label-mode depth is a uniform rescale of metric depth for
/// a fixed camera, so the real intrinsics give the same normals and planes.
inline UpdateOperator consistency_descent_operator(const ConsistencyDescentConfig& cfg) {
  MDK_CHECK(cfg.step_size >= 0.0, ErrorCode::kInvalidArgument, "step size must be non-negative");
  cfg.intr.validate();
  return [cfg](const RefineState& s) {
    const int w = s.width();
    const int h = s.height();
    RefineUpdate up{Grid<double>(w, h, 0.0), Grid<Vec3>(w, h, Vec3::Zero()), {}};
    NormalMap pseudo = normals_from_depth(s.depth_c, cfg.intr, cfg.window);
    if (cfg.step_size == 0.0) {
      up.hidden = std::move(pseudo);
      return up;
    }
    for (std::size_t i = 0; i < pseudo.vectors.size(); ++i) {
      if (pseudo.valid[i]) up.delta_normal[i] = cfg.step_size * (pseudo.vectors[i] - s.normal_u[i]);
    }
    const auto& intr = cfg.intr;
    const auto& d = s.depth_c;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!d.is_valid(x, y)) continue;
        const double len = s.normal_u(x, y).norm();
        if (len < 1e-12) continue;
        const Vec3 n = s.normal_u(x, y) / len;
        const Vec3 ray((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
        const double denom = n.dot(ray);
        if (std::abs(denom) < 1e-6 * ray.norm()) continue;
        double sum = 0.0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int qx = x + dx;
            const int qy = y + dy;
            if (!d.valid.contains(qx, qy) || !d.is_valid(qx, qy)) continue;
            const double dq = d.values(qx, qy);
            if (!(dq > 0.0)) continue;
            sum += n.dot(detail::backproject_pixel(qx, qy, dq, intr)) / denom;
            ++cnt;
          }
        }
        if (cnt > 0) up.delta_depth(x, y) = cfg.step_size * (sum / cnt - d.values(x, y));
      }
    }
    up.hidden = std::move(pseudo);
    return up;
  };
}

}  // namespace mdk
