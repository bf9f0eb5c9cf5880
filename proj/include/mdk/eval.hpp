#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "mdk/camera.hpp"
#include "mdk/error.hpp"
#include "mdk/geometry.hpp"
#include "mdk/grid.hpp"
#include "mdk/kdtree.hpp"

namespace mdk {

// ---------------------------------------------------------------------------
// Depth

struct DepthMetrics {
  double absrel = 0.0;
  double log10 = 0.0;
  double rms = 0.0;
  double rms_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t pixels = 0;
};

enum class Pooling { kPixelPooled, kSampleMean };

/// Dataset reduction. `kPixelPooled` with `exclude_invalid` is the corrected
/// default; the other settings reproduce older, flawed evaluations.
struct Protocol {
  Pooling pooling = Pooling::kPixelPooled;
  bool exclude_invalid = true;
};

namespace detail {

struct DepthSums {
  double abs_rel = 0.0;
  double log10 = 0.0;
  double sq = 0.0;
  double sq_log = 0.0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  std::size_t n = 0;

  void add(double d, double g) {
    abs_rel += std::abs(d - g) / g;
    log10 += std::abs(std::log10(d) - std::log10(g));
    sq += (d - g) * (d - g);
    const double l = std::log(d) - std::log(g);
    sq_log += l * l;
    const double ratio = std::max(d / g, g / d);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
    ++n;
  }

  DepthMetrics finish() const {
    const double c = static_cast<double>(n);
    return {abs_rel / c, log10 / c, std::sqrt(sq / c), std::sqrt(sq_log / c),
            static_cast<double>(d1) / c, static_cast<double>(d2) / c, static_cast<double>(d3) / c,
            n};
  }
};

inline DepthSums depth_sums(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                            bool exclude_invalid) {
  MDK_CHECK(pred.values.same_shape(gt.values) && mask.same_shape(gt.values),
            ErrorCode::kShapeMismatch, "prediction, ground truth and mask differ in shape");
  DepthSums s;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (!mask[i]) continue;
    const bool flagged = pred.valid[i] && gt.valid[i];
    if (exclude_invalid && !flagged) continue;
    const double d = pred.values[i];
    const double g = gt.values[i];
    if (!flagged) {
      // Legacy path: flagged-invalid pixels enter when their values are usable.
      if (!(d > 0.0 && g > 0.0 && std::isfinite(d) && std::isfinite(g))) continue;
    } else {
      MDK_CHECK(d > 0.0 && g > 0.0 && std::isfinite(d) && std::isfinite(g),
                ErrorCode::kNonPositiveDepth, "depth must be positive on the mask");
    }
    s.add(d, g);
  }
  return s;
}

}  // namespace detail

/// Standard depth errors over valid masked pixels.
inline DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, const Mask& mask) {
  const auto s = detail::depth_sums(pred, gt, mask, true);
  MDK_CHECK(s.n > 0, ErrorCode::kEmptyMask, "depth metric mask is empty");
  return s.finish();
}

struct DepthSample {
  DepthMap pred;
  DepthMap gt;
  Mask mask;
};

inline DepthMetrics depth_metrics(const std::vector<DepthSample>& samples, const Protocol& protocol) {
  MDK_CHECK(!samples.empty(), ErrorCode::kEmptyDataset, "no samples");
  if (protocol.pooling == Pooling::kPixelPooled) {
    detail::DepthSums total;
    for (const auto& s : samples) {
      const auto part = detail::depth_sums(s.pred, s.gt, s.mask, protocol.exclude_invalid);
      total.abs_rel += part.abs_rel;
      total.log10 += part.log10;
      total.sq += part.sq;
      total.sq_log += part.sq_log;
      total.d1 += part.d1;
      total.d2 += part.d2;
      total.d3 += part.d3;
      total.n += part.n;
    }
    MDK_CHECK(total.n > 0, ErrorCode::kEmptyDataset, "no pixels survive masking");
    return total.finish();
  }
  DepthMetrics mean;
  std::size_t used = 0;
  for (const auto& s : samples) {
    const auto part = detail::depth_sums(s.pred, s.gt, s.mask, protocol.exclude_invalid);
    if (part.n == 0) continue;
    const auto m = part.finish();
    mean.absrel += m.absrel;
    mean.log10 += m.log10;
    mean.rms += m.rms;
    mean.rms_log += m.rms_log;
    mean.delta1 += m.delta1;
    mean.delta2 += m.delta2;
    mean.delta3 += m.delta3;
    mean.pixels += m.pixels;
    ++used;
  }
  MDK_CHECK(used > 0, ErrorCode::kEmptyDataset, "no pixels survive masking");
  const double c = static_cast<double>(used);
  mean.absrel /= c;
  mean.log10 /= c;
  mean.rms /= c;
  mean.rms_log /= c;
  mean.delta1 /= c;
  mean.delta2 /= c;
  mean.delta3 /= c;
  return mean;
}

inline constexpr double kAlignFloor = 1e-6;

struct ScaleShift {
  double scale = 1.0;
  double shift = 0.0;
  DepthMap aligned;
  bool shift_only = false;
};

/// Least-squares (s, t) minimizing sum (s * pred + t - gt)^2 over the mask.
/// Falls back to a pure shift when pred has (near) zero variance. Aligned
/// values below 1e-6 are raised to 1e-6.
inline ScaleShift scale_shift_align(const DepthMap& pred, const DepthMap& gt, const Mask& mask) {
  MDK_CHECK(pred.values.same_shape(gt.values) && mask.same_shape(gt.values),
            ErrorCode::kShapeMismatch, "prediction, ground truth and mask differ in shape");
  const Mask m = mask & pred.valid & gt.valid;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) idx.push_back(i);
  }
  MDK_CHECK(!idx.empty(), ErrorCode::kEmptyMask, "alignment mask is empty");
  const double n = static_cast<double>(idx.size());
  double mp = 0.0;
  double mg = 0.0;
  for (auto i : idx) {
    mp += pred.values[i];
    mg += gt.values[i];
  }
  mp /= n;
  mg /= n;
  double var = 0.0;
  double cov = 0.0;
  for (auto i : idx) {
    const double dp = pred.values[i] - mp;
    var += dp * dp;
    cov += dp * (gt.values[i] - mg);
  }
  var /= n;
  cov /= n;

  ScaleShift out;
  if (idx.size() < 2 || var < 1e-12) {
    out.shift_only = true;
    out.scale = 1.0;
    out.shift = mg - mp;
  } else {
    out.scale = cov / var;
    out.shift = mg - out.scale * mp;
  }
  out.aligned = pred;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (!pred.valid[i]) continue;
    out.aligned.values[i] = std::max(out.scale * pred.values[i] + out.shift, kAlignFloor);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normals

/// Per-pixel angular error in degrees. Values are filled wherever both
/// vectors are finite; `valid` marks pixels with both inputs valid and the
/// mask set.
struct ErrorMap {
  Grid<double> degrees;
  Mask valid;
};

inline double angle_degrees(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0)) * (180.0 / std::numbers::pi);
}

inline ErrorMap normal_error_map(const NormalMap& pred_n, const NormalMap& gt_n, const Mask& mask) {
  MDK_CHECK(pred_n.vectors.same_shape(gt_n.vectors) && mask.same_shape(gt_n.vectors),
            ErrorCode::kShapeMismatch, "normal maps and mask differ in shape");
  ErrorMap e{Grid<double>(gt_n.width(), gt_n.height(), std::numeric_limits<double>::quiet_NaN()),
             mask & pred_n.valid & gt_n.valid};
  for (std::size_t i = 0; i < e.degrees.size(); ++i) {
    const Vec3& a = pred_n.vectors[i];
    const Vec3& b = gt_n.vectors[i];
    if (a.allFinite() && b.allFinite()) e.degrees[i] = angle_degrees(a, b);
  }
  return e;
}

struct NormalMetrics {
  double mean_deg = 0.0;
  double median_deg = 0.0;
  double rms_deg = 0.0;
  double acc_11_25 = 0.0;
  double acc_22_5 = 0.0;
  double acc_30 = 0.0;
  std::size_t pixels = 0;
};

namespace detail {

inline std::vector<double> collect_errors(const ErrorMap& e, bool exclude_invalid) {
  std::vector<double> v;
  for (std::size_t i = 0; i < e.degrees.size(); ++i) {
    if (exclude_invalid && !e.valid[i]) continue;
    if (!std::isfinite(e.degrees[i])) continue;
    v.push_back(e.degrees[i]);
  }
  return v;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline NormalMetrics normal_stats(const std::vector<double>& v) {
  NormalMetrics m;
  double sum = 0.0;
  double sq = 0.0;
  std::size_t a1 = 0, a2 = 0, a3 = 0;
  for (double e : v) {
    sum += e;
    sq += e * e;
    a1 += e < 11.25;
    a2 += e < 22.5;
    a3 += e < 30.0;
  }
  const double n = static_cast<double>(v.size());
  m.mean_deg = sum / n;
  m.median_deg = median(v);
  m.rms_deg = std::sqrt(sq / n);
  m.acc_11_25 = static_cast<double>(a1) / n;
  m.acc_22_5 = static_cast<double>(a2) / n;
  m.acc_30 = static_cast<double>(a3) / n;
  m.pixels = v.size();
  return m;
}

}  // namespace detail

/// Dataset normal statistics. Accuracies use strict `<` at 11.25, 22.5 and
/// 30 degrees.
inline NormalMetrics normal_metrics(const std::vector<ErrorMap>& maps, const Protocol& protocol) {
  MDK_CHECK(!maps.empty(), ErrorCode::kEmptyDataset, "no error maps");
  if (protocol.pooling == Pooling::kPixelPooled) {
    std::vector<double> all;
    for (const auto& e : maps) {
      const auto v = detail::collect_errors(e, protocol.exclude_invalid);
      all.insert(all.end(), v.begin(), v.end());
    }
    MDK_CHECK(!all.empty(), ErrorCode::kEmptyDataset, "no pixels survive masking");
    return detail::normal_stats(all);
  }
  NormalMetrics mean;
  std::size_t used = 0;
  for (const auto& e : maps) {
    const auto v = detail::collect_errors(e, protocol.exclude_invalid);
    if (v.empty()) continue;
    const auto m = detail::normal_stats(v);
    mean.mean_deg += m.mean_deg;
    mean.median_deg += m.median_deg;
    mean.rms_deg += m.rms_deg;
    mean.acc_11_25 += m.acc_11_25;
    mean.acc_22_5 += m.acc_22_5;
    mean.acc_30 += m.acc_30;
    mean.pixels += m.pixels;
    ++used;
  }
  MDK_CHECK(used > 0, ErrorCode::kEmptyDataset, "no pixels survive masking");
  const double c = static_cast<double>(used);
  mean.mean_deg /= c;
  mean.median_deg /= c;
  mean.rms_deg /= c;
  mean.acc_11_25 /= c;
  mean.acc_22_5 /= c;
  mean.acc_30 /= c;
  return mean;
}

// ---------------------------------------------------------------------------
// Reconstruction

inline constexpr double kDefaultFscoreTau = 0.05;

struct ReconMetrics {
  double chamfer_l1 = 0.0;
  double fscore = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;      // mean pred -> gt distance
  double completeness = 0.0;  // mean gt -> pred distance
};

namespace detail {

struct Directed {
  double mean = 0.0;
  double within = 0.0;
};

inline Directed directed(const std::vector<Vec3>& from, const KdTree& to, double tau) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (const auto& p : from) {
    const double d = to.nearest(p).distance;
    sum += d;
    hits += d < tau;
  }
  const double n = static_cast<double>(from.size());
  return {sum / n, static_cast<double>(hits) / n};
}

}  // namespace detail

/// Symmetric mean nearest-neighbor distance and F-score at `tau` (strict <).
inline ReconMetrics chamfer_fscore(const PointCloud& pred, const PointCloud& gt,
                                   double tau = kDefaultFscoreTau) {
  MDK_CHECK(!pred.empty() && !gt.empty(), ErrorCode::kEmptyCloud, "both clouds must be nonempty");
  MDK_CHECK(tau > 0.0, ErrorCode::kInvalidArgument, "tau must be positive");
  const KdTree gt_tree(gt.points);
  const KdTree pred_tree(pred.points);
  const auto pg = detail::directed(pred.points, gt_tree, tau);
  const auto gp = detail::directed(gt.points, pred_tree, tau);
  ReconMetrics m;
  m.accuracy = pg.mean;
  m.completeness = gp.mean;
  m.chamfer_l1 = 0.5 * (pg.mean + gp.mean);
  m.precision = pg.within;
  m.recall = gp.within;
  m.fscore = (m.precision + m.recall) > 0.0
                 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                 : 0.0;
  return m;
}

struct IcpConfig {
  int max_iters = 100;
  double tol = 1e-12;
  Pose init;
};

struct IcpResult {
  Pose pose;  // maps src into dst
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline void require_spread(const std::vector<Vec3>& pts, const char* which) {
  MDK_CHECK(pts.size() >= 3, ErrorCode::kDegenerateGeometry,
            std::string(which) + " needs at least 3 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov.noalias() += (p - mean) * (p - mean).transpose();
  const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(cov, Eigen::EigenvaluesOnly).eigenvalues();
  MDK_CHECK(ev(2) > 0.0 && ev(1) > 1e-12 * ev(2), ErrorCode::kDegenerateGeometry,
            std::string(which) + " points are collinear or coincident");
}

/// Least-squares rotation and translation mapping src[i] onto dst[i].
inline Pose kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h.noalias() += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = v * fix * u.transpose();
  return {r, cd - r * cs};
}

}  // namespace detail

/// Point-to-point ICP. Stops when the mean residual changes by less than
/// `tol` or after `max_iters` iterations.
inline IcpResult icp_align(const PointCloud& src, const PointCloud& dst, const IcpConfig& cfg = {}) {
  MDK_CHECK(cfg.max_iters >= 1, ErrorCode::kInvalidArgument, "max_iters must be >= 1");
  detail::require_spread(src.points, "source");
  detail::require_spread(dst.points, "target");
  const KdTree tree(dst.points);
  std::vector<Vec3> matched(src.size());

  auto correspond = [&](const Pose& pose) {
    double sum = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto nb = tree.nearest(pose.apply(src.points[i]));
      matched[i] = dst.points[nb.index];
      sum += nb.distance;
    }
    return sum / static_cast<double>(src.size());
  };

  IcpResult res;
  res.pose = cfg.init;
  double prev = correspond(res.pose);
  if (prev == 0.0) {
    res.converged = true;
    return res;
  }
  for (int it = 0; it < cfg.max_iters; ++it) {
    res.pose = detail::kabsch(src.points, matched);
    const double cur = correspond(res.pose);
    res.iterations = it + 1;
    const bool done = std::abs(prev - cur) < cfg.tol;
    prev = cur;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.residual = prev;
  return res;
}

struct ReconEvaluation {
  ReconMetrics metrics;
  Pose alignment;  // applied to the fused prediction
  std::size_t pred_points = 0;
};

/// Fuse predicted frames, optionally register them to the reference with
/// ICP, then score.
inline ReconEvaluation evaluate_reconstruction(const std::vector<Frame>& pred_frames,
                                               const PointCloud& gt_cloud,
                                               double tau = kDefaultFscoreTau, bool use_icp = false,
                                               const IcpConfig& icp = {}) {
  MDK_CHECK(!pred_frames.empty(), ErrorCode::kEmptyCloud, "no predicted frames");
  PointCloud fused = fuse_frames(pred_frames);
  MDK_CHECK(!fused.empty(), ErrorCode::kEmptyCloud, "prediction produced no points");
  MDK_CHECK(!gt_cloud.empty(), ErrorCode::kEmptyCloud, "reference cloud is empty");
  ReconEvaluation ev;
  if (use_icp) {
    ev.alignment = icp_align(fused, gt_cloud, icp).pose;
    fused = transform_cloud(fused, ev.alignment);
  }
  ev.pred_points = fused.size();
  ev.metrics = chamfer_fscore(fused, gt_cloud, tau);
  return ev;
}

inline double measure_distance(const PointCloud& cloud, std::size_t a, std::size_t b) {
  MDK_CHECK(a < cloud.size() && b < cloud.size(), ErrorCode::kIndexOutOfRange,
            "point index out of range");
  return point_distance(cloud.points[a], cloud.points[b]);
}

}  // namespace mdk
