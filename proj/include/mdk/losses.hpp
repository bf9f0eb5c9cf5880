#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "mdk/camera.hpp"
#include "mdk/error.hpp"
#include "mdk/geometry.hpp"
#include "mdk/grid.hpp"
#include "mdk/random.hpp"

namespace mdk {

/// Balancing weights of the per-step objective.
struct LossWeights {
  double w_d = 0.5;
  double w_n = 1.0;
  double w_dn = 0.01;

  void validate() const {
    MDK_CHECK(w_d >= 0.0 && w_n >= 0.0 && w_dn >= 0.0, ErrorCode::kInvalidArgument,
              "loss weights must be non-negative");
  }
};

/// Random proposal normalization: M crops, side fractions in [min_frac, max_frac].
struct RpnlConfig {
  int num_patches = 32;
  double min_frac = 0.125;
  double max_frac = 0.5;
  std::uint64_t seed = 0;
  int min_valid = 8;
  int max_retries = 16;

  void validate() const {
    MDK_CHECK(num_patches >= 1, ErrorCode::kInvalidArgument, "num_patches must be >= 1");
    MDK_CHECK(min_frac > 0.0 && min_frac <= max_frac && max_frac <= 1.0,
              ErrorCode::kInvalidArgument, "need 0 < min_frac <= max_frac <= 1");
    MDK_CHECK(max_retries >= 1, ErrorCode::kInvalidArgument, "max_retries must be >= 1");
  }
};

/// Exponential weighting of per-iteration losses; the last step has weight 1.
struct ScheduleConfig {
  double gamma = 0.9;
  int steps = 0;

  void validate() const {
    MDK_CHECK(gamma > 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "gamma must be in (0, 1]");
    MDK_CHECK(steps >= 0, ErrorCode::kInvalidArgument, "steps must be >= 0");
  }
};

namespace detail {

inline Mask joint_mask(const DepthMap& pred, const DepthMap& gt, const Mask& mask) {
  MDK_CHECK(pred.values.same_shape(gt.values) && mask.same_shape(gt.values),
            ErrorCode::kShapeMismatch, "prediction, ground truth and mask differ in shape");
  return mask & pred.valid & gt.valid;
}

inline std::vector<std::size_t> mask_indices(const Mask& m) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) idx.push_back(i);
  }
  return idx;
}

inline void require_positive(const DepthMap& d, const std::vector<std::size_t>& idx) {
  for (auto i : idx) {
    MDK_CHECK(d.values[i] > 0.0 && std::isfinite(d.values[i]), ErrorCode::kNonPositiveDepth,
              "depth must be positive on the mask");
  }
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Scale-invariant log loss

namespace detail {

// mean(g^2) - lambda * mean(g)^2, evaluated as var(g) + (1 - lambda) * mean(g)^2
// so that a constant residual gives an exact zero at lambda = 1.
inline double silog_from_residuals(const std::vector<double>& g, double lambda) {
  const double n = static_cast<double>(g.size());
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : g) var += (v - mean) * (v - mean);
  var /= n;
  return std::sqrt(std::max(0.0, var + (1.0 - lambda) * mean * mean));
}

}  // namespace detail

/// sqrt(mean(g^2) - lambda * mean(g)^2) with g = ln(pred) - ln(gt).
inline double silog(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                    double lambda = 0.5) {
  const auto idx = detail::mask_indices(detail::joint_mask(pred, gt, mask));
  MDK_CHECK(!idx.empty(), ErrorCode::kEmptyMask, "silog mask is empty");
  detail::require_positive(pred, idx);
  detail::require_positive(gt, idx);
  std::vector<double> g(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    g[k] = std::log(pred.values[idx[k]]) - std::log(gt.values[idx[k]]);
  }
  return detail::silog_from_residuals(g, lambda);
}

/// d silog / d pred, zero off the mask (and everywhere when the loss is 0).
inline Grid<double> silog_gradient(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                                   double lambda = 0.5) {
  const auto idx = detail::mask_indices(detail::joint_mask(pred, gt, mask));
  MDK_CHECK(!idx.empty(), ErrorCode::kEmptyMask, "silog mask is empty");
  detail::require_positive(pred, idx);
  detail::require_positive(gt, idx);
  std::vector<double> g(idx.size());
  double s1 = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    g[k] = std::log(pred.values[idx[k]]) - std::log(gt.values[idx[k]]);
    s1 += g[k];
  }
  const double n = static_cast<double>(idx.size());
  const double mean = s1 / n;
  const double loss = detail::silog_from_residuals(g, lambda);
  Grid<double> grad(pred.width(), pred.height(), 0.0);
  if (loss == 0.0) return grad;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double dv = (2.0 * g[k] / n - 2.0 * lambda * mean / n) / pred.values[idx[k]];
    grad[idx[k]] = dv / (2.0 * loss);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Random proposal normalization loss

struct Patch {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;

  friend bool operator==(const Patch&, const Patch&) = default;
};

struct RpnlResult {
  double value = 0.0;
  /// Every accepted crop in sampling order, including degenerate ones.
  std::vector<Patch> patches;
  /// Parallel to `patches`: crop skipped because a spread fell below 1e-12.
  std::vector<bool> degenerate;
  int degenerate_count = 0;
  /// Draws abandoned after `max_retries` crops with too few valid pixels.
  int skipped = 0;
};

/// Draws the crops. Depends only on the grid size, the mask and the seed.
inline std::vector<Patch> rpnl_patches(const Mask& valid, const RpnlConfig& cfg,
                                       int* skipped = nullptr) {
  cfg.validate();
  const int w = valid.width();
  const int h = valid.height();
  Rng rng(cfg.seed);
  std::vector<Patch> patches;
  int dropped = 0;
  for (int i = 0; i < cfg.num_patches; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_retries && !accepted; ++attempt) {
      const double fw = rng.uniform(cfg.min_frac, cfg.max_frac);
      const double fh = rng.uniform(cfg.min_frac, cfg.max_frac);
      const int pw = std::clamp(static_cast<int>(std::lround(fw * w)), 1, w);
      const int ph = std::clamp(static_cast<int>(std::lround(fh * h)), 1, h);
      const int x0 = static_cast<int>(rng.uniform_int(0, w - pw));
      const int y0 = static_cast<int>(rng.uniform_int(0, h - ph));
      int n = 0;
      for (int y = y0; y < y0 + ph; ++y) {
        for (int x = x0; x < x0 + pw; ++x) n += valid(x, y) != 0;
      }
      if (n >= cfg.min_valid) {
        patches.push_back({x0, y0, pw, ph});
        accepted = true;
      }
    }
    if (!accepted) ++dropped;
  }
  if (skipped) *skipped = dropped;
  return patches;
}

namespace detail {

inline std::vector<std::size_t> patch_indices(const Patch& p, const Mask& valid) {
  std::vector<std::size_t> idx;
  for (int y = p.y0; y < p.y0 + p.height; ++y) {
    for (int x = p.x0; x < p.x0 + p.width; ++x) {
      if (valid(x, y)) idx.push_back(static_cast<std::size_t>(y) * valid.width() + x);
    }
  }
  return idx;
}

// Lower median: the element at rank (n - 1) / 2 of a stable sort. Returns
// its position within `vals`.
inline std::size_t lower_median_pos(const std::vector<double>& vals) {
  std::vector<std::size_t> order(vals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
  return order[(vals.size() - 1) / 2];
}

struct Normalized {
  std::vector<double> values;
  double median = 0.0;
  double spread = 0.0;
  std::size_t median_pos = 0;
};

inline Normalized median_normalize(const std::vector<double>& vals) {
  Normalized out;
  out.median_pos = lower_median_pos(vals);
  out.median = vals[out.median_pos];
  double s = 0.0;
  for (double v : vals) s += std::abs(v - out.median);
  out.spread = s / static_cast<double>(vals.size());
  out.values.resize(vals.size());
  if (out.spread >= 1e-12) {
    for (std::size_t j = 0; j < vals.size(); ++j) out.values[j] = (vals[j] - out.median) / out.spread;
  }
  return out;
}

}  // namespace detail

/// Patch-wise median / mean-absolute-deviation normalized L1.
inline RpnlResult rpnl_detailed(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                                const RpnlConfig& cfg) {
  const Mask valid = detail::joint_mask(pred, gt, mask);
  MDK_CHECK(count(valid) > 0, ErrorCode::kEmptyMask, "rpnl mask is empty");
  RpnlResult res;
  res.patches = rpnl_patches(valid, cfg, &res.skipped);
  double total = 0.0;
  int used = 0;
  for (const auto& patch : res.patches) {
    const auto idx = detail::patch_indices(patch, valid);
    std::vector<double> p(idx.size());
    std::vector<double> g(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      p[j] = pred.values[idx[j]];
      g[j] = gt.values[idx[j]];
    }
    const auto pn = detail::median_normalize(p);
    const auto gn = detail::median_normalize(g);
    const bool bad = pn.spread < 1e-12 || gn.spread < 1e-12;
    res.degenerate.push_back(bad);
    if (bad) {
      ++res.degenerate_count;
      continue;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) sum += std::abs(gn.values[j] - pn.values[j]);
    total += sum / static_cast<double>(idx.size());
    ++used;
  }
  res.value = used > 0 ? total / used : 0.0;
  return res;
}

inline double rpnl(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                   const RpnlConfig& cfg) {
  return rpnl_detailed(pred, gt, mask, cfg).value;
}

/// d rpnl / d pred. Exact wherever no value ties its patch median and no
/// normalized residual is zero.
inline Grid<double> rpnl_gradient(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                                  const RpnlConfig& cfg) {
  const Mask valid = detail::joint_mask(pred, gt, mask);
  MDK_CHECK(count(valid) > 0, ErrorCode::kEmptyMask, "rpnl mask is empty");
  const auto patches = rpnl_patches(valid, cfg);
  Grid<double> grad(pred.width(), pred.height(), 0.0);
  std::vector<std::pair<std::vector<std::size_t>, std::vector<double>>> contrib;
  for (const auto& patch : patches) {
    const auto idx = detail::patch_indices(patch, valid);
    const std::size_t n = idx.size();
    std::vector<double> p(n);
    std::vector<double> g(n);
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = pred.values[idx[j]];
      g[j] = gt.values[idx[j]];
    }
    const auto pn = detail::median_normalize(p);
    const auto gn = detail::median_normalize(g);
    if (pn.spread < 1e-12 || gn.spread < 1e-12) continue;

    const double inv_n = 1.0 / static_cast<double>(n);
    const double s = pn.spread;
    const std::size_t k = pn.median_pos;
    std::vector<double> r(n);
    double r_sum = 0.0;
    double q = 0.0;
    double sigma_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      r[j] = -detail::sign(gn.values[j] - pn.values[j]) * inv_n;
      r_sum += r[j];
      q += r[j] * (p[j] - pn.median);
      sigma_sum += detail::sign(p[j] - pn.median);
    }
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      double ds = detail::sign(p[i] - pn.median) * inv_n;
      double di = r[i] / s;
      if (i == k) {
        ds -= sigma_sum * inv_n;
        di -= r_sum / s;
      }
      d[i] = di - q / (s * s) * ds;
    }
    contrib.emplace_back(idx, std::move(d));
  }
  if (contrib.empty()) return grad;
  const double inv_m = 1.0 / static_cast<double>(contrib.size());
  for (const auto& [idx, d] : contrib) {
    for (std::size_t j = 0; j < idx.size(); ++j) grad[idx[j]] += d[j] * inv_m;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Virtual normal loss

struct VnlResult {
  double value = 0.0;
  /// Accepted triplets as linear pixel indices, in sampling order.
  std::vector<std::array<std::size_t, 3>> triplets;
  std::size_t rejected = 0;
};

inline constexpr double kVnlAltitudeFraction = 1e-3;

namespace detail {

inline double bbox_diagonal(const std::vector<Vec3>& pts) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

// Smallest altitude of triangle abc: twice the area over the longest side.
inline double min_altitude(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double area2 = (b - a).cross(c - a).norm();
  const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
  return longest > 0.0 ? area2 / longest : 0.0;
}

inline Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
  return (b - a).cross(c - a).normalized();
}

inline Vec3 pixel_point(std::size_t i, const DepthMap& d, const CameraIntrinsics& intr) {
  const int x = static_cast<int>(i % static_cast<std::size_t>(d.width()));
  const int y = static_cast<int>(i / static_cast<std::size_t>(d.width()));
  return backproject_pixel(x, y, d.values[i], intr);
}

}  // namespace detail

/// Mean L1 distance between the normals of virtual planes spanned by random
/// pixel triplets, back-projected from prediction and from ground truth.
/// Triplets whose triangle (in either cloud) has an altitude below 1e-3 of
/// that cloud's bounding-box diagonal are redrawn.
inline VnlResult vnl_detailed(const DepthMap& pred, const DepthMap& gt,
                              const CameraIntrinsics& intr, int num_triplets,
                              std::uint64_t seed) {
  intr.validate();
  MDK_CHECK(num_triplets >= 1, ErrorCode::kInvalidArgument, "num_triplets must be >= 1");
  const auto idx = detail::mask_indices(
      detail::joint_mask(pred, gt, full_mask(gt.width(), gt.height())));
  MDK_CHECK(idx.size() >= 3, ErrorCode::kInsufficientPoints, "vnl needs at least 3 valid pixels");
  detail::require_positive(pred, idx);
  detail::require_positive(gt, idx);

  std::vector<Vec3> gp(idx.size());
  std::vector<Vec3> pp(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    gp[k] = detail::pixel_point(idx[k], gt, intr);
    pp[k] = detail::pixel_point(idx[k], pred, intr);
  }
  const double g_thr = kVnlAltitudeFraction * detail::bbox_diagonal(gp);
  const double p_thr = kVnlAltitudeFraction * detail::bbox_diagonal(pp);

  Rng rng(seed);
  VnlResult res;
  double total = 0.0;
  const std::int64_t last = static_cast<std::int64_t>(idx.size()) - 1;
  const std::size_t max_attempts = static_cast<std::size_t>(num_triplets) * 10;
  for (std::size_t attempt = 0;
       attempt < max_attempts && res.triplets.size() < static_cast<std::size_t>(num_triplets);
       ++attempt) {
    const auto a = static_cast<std::size_t>(rng.uniform_int(0, last));
    const auto b = static_cast<std::size_t>(rng.uniform_int(0, last));
    const auto c = static_cast<std::size_t>(rng.uniform_int(0, last));
    if (a == b || b == c || a == c ||
        detail::min_altitude(gp[a], gp[b], gp[c]) < g_thr ||
        detail::min_altitude(pp[a], pp[b], pp[c]) < p_thr) {
      ++res.rejected;
      continue;
    }
    const Vec3 ng = detail::triangle_normal(gp[a], gp[b], gp[c]);
    const Vec3 np = detail::triangle_normal(pp[a], pp[b], pp[c]);
    total += (ng - np).cwiseAbs().sum();
    res.triplets.push_back({idx[a], idx[b], idx[c]});
  }
  MDK_CHECK(!res.triplets.empty(), ErrorCode::kInsufficientPoints,
            "no non-degenerate triplet found");
  res.value = total / static_cast<double>(res.triplets.size());
  return res;
}

inline double vnl(const DepthMap& pred, const DepthMap& gt, const CameraIntrinsics& intr,
                  int num_triplets, std::uint64_t seed) {
  return vnl_detailed(pred, gt, intr, num_triplets, seed).value;
}

// ---------------------------------------------------------------------------
// Normal terms

/// Mean of 1 - n . n_pseudo where n_pseudo are least-squares normals of
/// `depth`. `depth` must be metric (not canonical) depth.
inline double consistency_dn(const NormalMap& normal, const DepthMap& depth,
                             const CameraIntrinsics& intr, int window = kDefaultNormalWindow) {
  MDK_CHECK(normal.vectors.same_shape(depth.values), ErrorCode::kShapeMismatch,
            "normal and depth maps differ in shape");
  const NormalMap pseudo = normals_from_depth(depth, intr, window);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pseudo.vectors.size(); ++i) {
    if (!normal.valid[i] || !pseudo.valid[i]) continue;
    sum += 1.0 - normal.vectors[i].dot(pseudo.vectors[i]);
    ++n;
  }
  MDK_CHECK(n > 0, ErrorCode::kEmptyOverlap, "normal and pseudo-normal maps do not overlap");
  return sum / static_cast<double>(n);
}

namespace detail {

inline std::vector<std::size_t> normal_indices(const NormalMap& a, const NormalMap& b,
                                               const Mask& mask) {
  MDK_CHECK(a.vectors.same_shape(b.vectors) && mask.same_shape(a.vectors),
            ErrorCode::kShapeMismatch, "normal maps and mask differ in shape");
  return mask_indices(mask & a.valid & b.valid);
}

}  // namespace detail

/// Mean angle (radians) between predicted and reference normals. Identical
/// vectors score exactly 0 even when their dot product rounds below 1.
inline double normal_angular_loss(const NormalMap& pred_n, const NormalMap& gt_n,
                                  const Mask& mask) {
  const auto idx = detail::normal_indices(pred_n, gt_n, mask);
  MDK_CHECK(!idx.empty(), ErrorCode::kEmptyMask, "angular loss mask is empty");
  double sum = 0.0;
  for (auto i : idx) {
    if (pred_n.vectors[i] == gt_n.vectors[i]) continue;
    sum += std::acos(std::clamp(pred_n.vectors[i].dot(gt_n.vectors[i]), -1.0, 1.0));
  }
  return sum / static_cast<double>(idx.size());
}

/// d angular / d pred_n, treating each predicted vector's components as free.
/// Zero where the dot product is clamped or the vectors are identical.
inline Grid<Vec3> normal_angular_gradient(const NormalMap& pred_n, const NormalMap& gt_n,
                                          const Mask& mask) {
  const auto idx = detail::normal_indices(pred_n, gt_n, mask);
  MDK_CHECK(!idx.empty(), ErrorCode::kEmptyMask, "angular loss mask is empty");
  Grid<Vec3> grad(pred_n.width(), pred_n.height(), Vec3::Zero());
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  for (auto i : idx) {
    if (pred_n.vectors[i] == gt_n.vectors[i]) continue;
    const double c = pred_n.vectors[i].dot(gt_n.vectors[i]);
    if (c <= -1.0 || c >= 1.0) continue;
    grad[i] = -inv_n / std::sqrt(1.0 - c * c) * gt_n.vectors[i];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Compositions

inline double compose_step_loss(double l_d, double l_n, double l_dn,
                                const LossWeights& w = LossWeights{}) {
  w.validate();
  return w.w_d * l_d + w.w_n * l_n + w.w_dn * l_dn;
}

/// sum_t gamma^(T - t) * L^t over t = 0..T.
inline double gamma_total(std::span<const double> step_losses, const ScheduleConfig& cfg) {
  cfg.validate();
  MDK_CHECK(step_losses.size() == static_cast<std::size_t>(cfg.steps) + 1,
            ErrorCode::kLengthMismatch, "expected steps + 1 losses");
  double total = 0.0;
  for (int t = 0; t <= cfg.steps; ++t) {
    total += std::pow(cfg.gamma, cfg.steps - t) * step_losses[static_cast<std::size_t>(t)];
  }
  return total;
}

struct FinetuneParts {
  double l_dn = 0.0;
  double l_d = 0.0;
  double l_n = 0.0;
  double l_d_pseudo = 0.0;
  double l_n_pseudo = 0.0;
};

/// Fine-tuning objective with the frozen model's outputs as extra labels.
inline double finetune_loss(const FinetuneParts& p) {
  return 0.01 * p.l_dn + p.l_d + p.l_n + 0.01 * (p.l_d_pseudo + p.l_n_pseudo);
}

/// Which terms enter the depth objective.
struct DepthLossConfig {
  bool use_silog = true;
  bool use_vnl = true;
  bool use_rpnl = true;
  double silog_lambda = 0.5;
  int vnl_triplets = 1000;
  RpnlConfig rpnl;
  std::uint64_t seed = 0;
};

struct DepthLossBreakdown {
  double silog = 0.0;
  double vnl = 0.0;
  double rpnl = 0.0;
  double total = 0.0;
};

/// Sum of the enabled depth terms. The pair-wise normal term needs plane
/// annotations and is not available here.
inline DepthLossBreakdown depth_loss(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                                     const CameraIntrinsics& intr, const DepthLossConfig& cfg) {
  DepthLossBreakdown out;
  if (cfg.use_silog) out.silog = silog(pred, gt, mask, cfg.silog_lambda);
  if (cfg.use_vnl) {
    DepthMap masked_pred = pred;
    masked_pred.valid = mask & pred.valid;
    out.vnl = vnl(masked_pred, gt, intr, cfg.vnl_triplets, cfg.seed);
  }
  if (cfg.use_rpnl) {
    RpnlConfig rc = cfg.rpnl;
    rc.seed = cfg.seed;
    out.rpnl = rpnl(pred, gt, mask, rc);
  }
  out.total = out.silog + out.vnl + out.rpnl;
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Scalar loss over a flat parameter vector with its analytic gradient.
struct DifferentiableLoss {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Central differences against the analytic gradient. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor).
inline GradCheckReport grad_check(const DifferentiableLoss& loss, std::span<const double> point,
                                  double eps = 1e-5, double abs_floor = 1e-8) {
  MDK_CHECK(eps > 0.0, ErrorCode::kInvalidArgument, "eps must be positive");
  const std::vector<double> analytic = loss.gradient(point);
  MDK_CHECK(analytic.size() == point.size(), ErrorCode::kLengthMismatch,
            "gradient size differs from parameter size");
  std::vector<double> x(point.begin(), point.end());
  GradCheckReport rep;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = loss.value(x);
    x[i] = orig - eps;
    const double down = loss.value(x);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double rel_err =
        abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), abs_floor});
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
    if (rel_err > rep.max_rel_error) {
      rep.max_rel_error = rel_err;
      rep.worst_index = i;
    }
    ++rep.checked;
  }
  return rep;
}

namespace detail {

inline DepthMap with_values(const DepthMap& like, std::span<const double> v) {
  DepthMap d = like;
  std::copy(v.begin(), v.end(), d.values.begin());
  return d;
}

inline std::vector<double> flatten(const Grid<double>& g) { return {g.begin(), g.end()}; }

}  // namespace detail

/// silog as a function of the predicted depth values (validity from `like`).
inline DifferentiableLoss silog_loss_handle(const DepthMap& like, const DepthMap& gt,
                                            const Mask& mask, double lambda = 0.5) {
  return {[=](std::span<const double> v) {
            return silog(detail::with_values(like, v), gt, mask, lambda);
          },
          [=](std::span<const double> v) {
            return detail::flatten(silog_gradient(detail::with_values(like, v), gt, mask, lambda));
          }};
}

inline DifferentiableLoss rpnl_loss_handle(const DepthMap& like, const DepthMap& gt,
                                           const Mask& mask, const RpnlConfig& cfg) {
  return {[=](std::span<const double> v) {
            return rpnl(detail::with_values(like, v), gt, mask, cfg);
          },
          [=](std::span<const double> v) {
            return detail::flatten(rpnl_gradient(detail::with_values(like, v), gt, mask, cfg));
          }};
}

/// Angular loss over the flattened (x, y, z) components of the prediction.
inline DifferentiableLoss angular_loss_handle(const NormalMap& like, const NormalMap& gt_n,
                                              const Mask& mask) {
  auto unflatten = [like](std::span<const double> v) {
    NormalMap n = like;
    for (std::size_t i = 0; i < n.vectors.size(); ++i) {
      n.vectors[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
    }
    return n;
  };
  return {[=](std::span<const double> v) { return normal_angular_loss(unflatten(v), gt_n, mask); },
          [=](std::span<const double> v) {
            const auto g = normal_angular_gradient(unflatten(v), gt_n, mask);
            std::vector<double> out;
            out.reserve(g.size() * 3);
            for (const auto& e : g) {
              out.push_back(e.x());
              out.push_back(e.y());
              out.push_back(e.z());
            }
            return out;
          }};
}

inline std::vector<double> flatten_normals(const NormalMap& n) {
  std::vector<double> out;
  out.reserve(n.vectors.size() * 3);
  for (const auto& e : n.vectors) {
    out.push_back(e.x());
    out.push_back(e.y());
    out.push_back(e.z());
  }
  return out;
}

}  // namespace mdk
