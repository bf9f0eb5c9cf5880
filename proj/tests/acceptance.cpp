// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mdk/io.hpp"
#include "mdk/mdk.hpp"
#include "oracles.hpp"

namespace {

using namespace mdk;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

class Detail {
 public:
  template <typename T>
  Detail& operator()(const char* key, T v) {
    if (!first_) os_ << ", ";
    first_ = false;
    os_ << key << '=' << v;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
  bool first_ = true;
};

CameraIntrinsics Square(double f, double c, int size) { return {f, f, c, c, size, size}; }

Mask All(const DepthMap& d) { return full_mask(d.width(), d.height()); }

DepthMap Affine(const DepthMap& d, double a, double b) {
  DepthMap out = d;
  for (auto& v : out.values) v = a * v + b;
  return out;
}

double Angle(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

PointCloud Cloud(std::vector<Vec3> pts) {
  PointCloud c;
  c.points = std::move(pts);
  return c;
}

std::vector<Vec3> RandomCloud(std::size_t n, Rng& rng) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  return pts;
}

// --------------------------------------------------------------------------

Outcome CanonicalRoundTrips() {
  Outcome o;
  int mismatched = 0;
  for (double omega : {0.5, 1.0, 2.0, 3.7}) {
    const auto d = oracle::float_grid(40, 30, 11);
    const CameraIntrinsics k{1000.0 / omega, 1000.0 / omega, 19.5, 14.5, 40, 30};
    const auto b = canonicalize_label(d, ImageBuffer::filled(40, 30, 0.5), k);
    const auto back = decanonicalize(b.depth_c, b);
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      mismatched += back.values[i] != d.values[i] || back.valid[i] != d.valid[i];
    }
  }
  // Blocks of 10 px; pixels within 2 px of a block edge mix neighbours.
  Grid<double> v(80, 80, 0.0);
  for (int y = 0; y < 80; ++y)
    for (int x = 0; x < 80; ++x) v(x, y) = 1.0 + 0.37 * ((x / 10) * 7 + (y / 10) * 3 % 11);
  const auto blocks = DepthMap::from_values(v);
  double worst = 0.0;
  for (double f : {500.0, 2000.0}) {
    const auto b = canonicalize_image(blocks, ImageBuffer::filled(80, 80, 0.0), Square(f, 39.5, 80));
    const auto back = decanonicalize(b.depth_c, b);
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 80; ++x) {
        const int rx = x % 10, ry = y % 10;
        if (rx < 2 || rx >= 8 || ry < 2 || ry >= 8) continue;
        worst = std::max(worst, std::abs(back.values(x, y) - blocks.values(x, y)));
      }
  }
  o.pass = mismatched == 0 && worst < 1e-6;
  o.detail = Detail()("label_mismatches", mismatched)("image_max_abs", worst).str();
  return o;
}

Outcome FocalAmbiguity() {
  // A textured fronto-parallel plane; each pixel shows the texture at the
  // world point it backprojects to.
  auto render = [](double f, double depth) {
    const CameraIntrinsics k{f, f, 31.5, 23.5, 64, 48};
    ImageBuffer img{Grid<Vec3>(64, 48, Vec3::Zero())};
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 64; ++x) {
        const Vec3 p = backproject({x, y}, depth, k);
        const double g = 0.5 + 0.5 * std::sin(40.0 * p.x()) * std::cos(25.0 * p.y());
        img.pixels(x, y) = Vec3(g, 1.0 - g, 0.5 * g);
      }
    const auto d = DepthMap::from_values(Grid<double>(64, 48, depth));
    return canonicalize_label(d, img, k);
  };
  const auto a = render(1000.0, 3.0);
  const auto b = render(500.0, 1.5);
  int differing = 0;
  for (std::size_t i = 0; i < a.image_c.pixels.size(); ++i) {
    differing += a.image_c.pixels[i] != b.image_c.pixels[i];
  }
  double rel = 0.0;
  for (std::size_t i = 0; i < a.depth_c.values.size(); ++i) {
    rel = std::max(rel, std::abs(a.depth_c.values[i] - b.depth_c.values[i]) / a.depth_c.values[i]);
  }
  return {differing == 0 && rel < 1e-6,
          Detail()("differing_pixels", differing)("canonical_depth_rel", rel).str()};
}

Outcome PixelSizeInvariance() {
  const PhysicalCamera coarse{4000, 4}, fine{4000, 2};
  const CameraIntrinsics k1{pixel_focal(coarse), pixel_focal(coarse), 31.5, 23.5, 64, 48};
  const CameraIntrinsics k2{pixel_focal(fine), pixel_focal(fine), 63.5, 47.5, 128, 96};
  const Vec3 n = Vec3(0.2, -0.1, -1).normalized();
  double worst = 0.0;
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 64; ++u) {
      const Eigen::Vector2d p1(u, v);
      const Eigen::Vector2d p2(2 * (u - k1.cx) + k2.cx, 2 * (v - k1.cy) + k2.cy);
      const double d1 = -3.0 / n.dot(synthetic::pixel_ray(p1.x(), p1.y(), k1));
      const double d2 = -3.0 / n.dot(synthetic::pixel_ray(p2.x(), p2.y(), k2));
      worst = std::max(worst, (backproject(p1, d1, k1) - backproject(p2, d2, k2)).cwiseAbs().maxCoeff());
    }
  return {worst < 1e-9, Detail()("max_abs", worst).str()};
}

Outcome NormalScaleAgnostic() {
  const auto d = synthetic::smooth_depth(48, 40, 5);
  const CameraIntrinsics k{60, 60, 23.5, 19.5, 48, 40};
  const auto base = normals_from_depth(d, k);
  double worst = 0.0;
  int mask_diff = 0;
  std::size_t compared = 0;
  for (double s : {0.5, 2.0, 10.0}) {
    const auto n = normals_from_depth(Affine(d, s, 0.0), k);
    for (std::size_t i = 0; i < n.vectors.size(); ++i) {
      mask_diff += n.valid[i] != base.valid[i];
      if (!n.valid[i] || !base.valid[i]) continue;
      worst = std::max(worst, Angle(n.vectors[i], base.vectors[i]));
      ++compared;
    }
  }
  return {mask_diff == 0 && compared > 0 && worst < 1e-6,
          Detail()("max_rad", worst)("compared", compared).str()};
}

Outcome LossZerosAndInvariances() {
  const auto gt = synthetic::smooth_depth(32, 32, 8);
  const CameraIntrinsics k{40, 40, 15.5, 15.5, 32, 32};
  const auto mask = All(gt);
  RpnlConfig rc;
  rc.seed = 4;
  const auto n = normals_from_depth(gt, k);
  const double z_silog = silog(gt, gt, mask);
  const double z_rpnl = rpnl(gt, gt, mask, rc);
  const double z_vnl = vnl(gt, gt, k, 500, 4);
  const double z_ang = normal_angular_loss(n, n, mask);
  double affine = 0.0;
  for (auto [a, b] : {std::pair{2.0, 0.5}, {0.3, -0.2}, {7.0, 3.0}}) {
    affine = std::max(affine, rpnl(Affine(gt, a, b), gt, mask, rc));
  }
  double scaled_vnl = 0.0;
  double scaled_silog = 0.0;
  for (double s : {0.5, 3.0, 25.0}) {
    scaled_vnl = std::max(scaled_vnl, vnl(Affine(gt, s, 0.0), gt, k, 500, 4));
    scaled_silog = std::max(scaled_silog, silog(Affine(gt, s, 0.0), gt, mask, 1.0));
  }
  const bool zeros = z_silog == 0.0 && z_rpnl == 0.0 && z_vnl == 0.0 && z_ang == 0.0;
  return {zeros && affine < 1e-9 && scaled_vnl < 1e-9 && scaled_silog < 1e-9,
          Detail()("silog0", z_silog)("rpnl0", z_rpnl)("vnl0", z_vnl)("angular0", z_ang)(
              "rpnl_affine", affine)("vnl_scaled", scaled_vnl)("silog1_scaled", scaled_silog)
              .str()};
}

Outcome GradientChecks() {
  const auto gt = synthetic::random_depth(24, 24, 41);
  const auto pred = synthetic::random_depth(24, 24, 42);
  const auto mask = All(gt);
  const auto v = detail::flatten(pred.values);
  const double e_silog = grad_check(silog_loss_handle(pred, gt, mask, 0.5), v).max_rel_error;
  RpnlConfig rc;
  rc.seed = 3;
  const double e_rpnl = grad_check(rpnl_loss_handle(pred, gt, mask, rc), v).max_rel_error;
  Rng rng(51);
  NormalMap pn(10, 10), gn(10, 10);
  for (std::size_t i = 0; i < pn.vectors.size(); ++i) {
    Vec3 a, b;
    do {
      a = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      b = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    } while (std::abs(a.dot(b)) >= 0.99);
    pn.vectors[i] = a;
    gn.vectors[i] = b;
    pn.valid[i] = gn.valid[i] = 1;
  }
  const double e_ang =
      grad_check(angular_loss_handle(pn, gn, Mask(10, 10, 1)), flatten_normals(pn)).max_rel_error;
  return {e_silog < 1e-4 && e_rpnl < 1e-4 && e_ang < 1e-4,
          Detail()("silog", e_silog)("rpnl", e_rpnl)("angular", e_ang).str()};
}

Outcome ScheduleArithmetic() {
  const std::vector<double> losses{1.0, 1.0};
  const double g = gamma_total(losses, {0.9, 1});
  const double c = compose_step_loss(1.0, 1.0, 1.0);
  return {g == 1.9 && c == 1.51, Detail()("gamma_total", g)("compose", c).str()};
}

Outcome RefinementDemo() {
  const CameraIntrinsics k{60, 60, 23.5, 17.5, 48, 36};
  RefineState init;
  init.depth_c = synthetic::add_relative_noise(
      synthetic::render_plane(k, Vec3(0.3, -0.2, -1).normalized(), -3.0), 0.01, 7);
  init.normal_u = Grid<Vec3>(48, 36, Vec3(0, 0, -1));
  ConsistencyDescentConfig cfg;
  cfg.intr = k;
  const auto traj = run_refinement(init, consistency_descent_operator(cfg), 8);
  std::vector<double> l;
  for (const auto& s : traj) l.push_back(consistency_dn(normalized_normals(s.normal_u), s.depth_c, k));
  bool decreasing = l.size() == 10;  // initial state plus T + 1 updates
  for (std::size_t i = 1; i < l.size(); ++i) decreasing = decreasing && l[i] < l[i - 1];
  const double ratio = l.back() / l.front();
  return {decreasing && ratio < 0.5,
          Detail()("initial", l.front())("final", l.back())("ratio", ratio)("strict", decreasing).str()};
}

bool SameNormalMetrics(const NormalMetrics& a, const NormalMetrics& b) {
  return a.mean_deg == b.mean_deg && a.median_deg == b.median_deg && a.rms_deg == b.rms_deg &&
         a.acc_11_25 == b.acc_11_25 && a.acc_22_5 == b.acc_22_5 && a.acc_30 == b.acc_30 &&
         a.pixels == b.pixels;
}

bool SameDepthMetrics(const DepthMetrics& a, const DepthMetrics& b) {
  return a.absrel == b.absrel && a.log10 == b.log10 && a.rms == b.rms && a.rms_log == b.rms_log &&
         a.delta1 == b.delta1 && a.delta2 == b.delta2 && a.delta3 == b.delta3 && a.pixels == b.pixels;
}

Outcome ProtocolDiscrepancy() {
  auto errors = [](std::vector<double> deg) {
    const int n = static_cast<int>(deg.size());
    ErrorMap e{Grid<double>(n, 1, 0.0), Mask(n, 1, 1)};
    for (int i = 0; i < n; ++i) e.degrees[i] = deg[i];
    return e;
  };
  // Image A: one pixel at 0 deg. Image B: three pixels at 30 deg.
  // Pooled {0, 30, 30, 30}: median 30. Per image medians 0 and 30: mean 15.
  const std::vector<ErrorMap> set{errors({0}), errors({30, 30, 30})};
  const auto pooled = normal_metrics(set, {Pooling::kPixelPooled, true});
  const auto mean = normal_metrics(set, {Pooling::kSampleMean, true});
  const bool discrepancy = pooled.median_deg == 30.0 && mean.median_deg == 15.0;

  auto masked = errors({10, 170, 20, 50});
  masked.valid[1] = 0;
  bool removed = true;
  for (auto pooling : {Pooling::kPixelPooled, Pooling::kSampleMean}) {
    const auto with = normal_metrics({masked, errors({5})}, {pooling, true});
    const auto without = normal_metrics({errors({10, 20, 50}), errors({5})}, {pooling, true});
    removed = removed && SameNormalMetrics(with, without);
  }
  const auto legacy = normal_metrics({masked}, {Pooling::kPixelPooled, false});
  removed = removed && legacy.pixels == 4;

  auto depth = [](std::vector<double> v) {
    Grid<double> g(static_cast<int>(v.size()), 1, 0.0);
    std::copy(v.begin(), v.end(), g.begin());
    return DepthMap::from_values(g);
  };
  // One pixel outside the mask, one flagged invalid in the prediction.
  DepthSample s{depth({1.0, 9.0, 2.2, 3.0, 7.0}), depth({1.1, 1.0, 2.0, 3.3, 0.5}), Mask(5, 1, 1)};
  s.mask[1] = 0;
  s.pred.valid[4] = 0;
  const DepthSample clean{depth({1.0, 2.2, 3.0}), depth({1.1, 2.0, 3.3}), Mask(3, 1, 1)};
  for (auto pooling : {Pooling::kPixelPooled, Pooling::kSampleMean}) {
    removed = removed && SameDepthMetrics(depth_metrics({s}, {pooling, true}),
                                          depth_metrics({clean}, {pooling, true}));
  }
  removed = removed && depth_metrics({s}, {Pooling::kPixelPooled, false}).pixels == 4;
  return {discrepancy && removed,
          Detail()("pooled_median", pooled.median_deg)("sample_mean_median", mean.median_deg)(
              "exclude_invalid", removed)
              .str()};
}

Outcome ChamferBruteForce() {
  Rng rng(2024);
  int mismatched = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const auto a = RandomCloud(static_cast<std::size_t>(rng.uniform_int(1, 500)), rng);
    const auto b = RandomCloud(static_cast<std::size_t>(rng.uniform_int(1, 500)), rng);
    const double tau = rng.uniform(0.02, 0.3);
    const auto m = chamfer_fscore(Cloud(a), Cloud(b), tau);
    const auto o = oracle::brute_chamfer(a, b, tau);
    mismatched += m.chamfer_l1 != o.chamfer || m.precision != o.precision ||
                  m.recall != o.recall || m.fscore != o.fscore;
  }
  return {mismatched == 0, Detail()("pairs", 100)("mismatched", mismatched).str()};
}

Outcome IcpRecovery() {
  Rng rng(99);
  double worst = 0.0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    const auto pts = RandomCloud(500, rng);
    const Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    // Every other trial uses the largest allowed motion.
    const double frac = t % 2 ? 1.0 : rng.uniform(0.2, 1.0);
    const double diameter = 2.0 * std::sqrt(3.0);
    const Vec3 dir = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Pose truth = Pose::make(axis_angle(axis, frac * 10.0 * std::numbers::pi / 180.0),
                                  dir * frac * 0.1 * diameter);
    const auto src = Cloud(pts);
    const auto r = icp_align(src, transform_cloud(src, truth));
    worst = std::max({worst, (r.pose.rotation - truth.rotation).cwiseAbs().maxCoeff(),
                      (r.pose.translation - truth.translation).cwiseAbs().maxCoeff()});
  }
  return {worst < 1e-4, Detail()("trials", trials)("max_abs_error", worst).str()};
}

Outcome BoxReconstruction() {
  // f = 100 and cx = 31.5 put the front-face corners of the box on pixels
  // (19, 11), (44, 11) and (19, 36) of the first view.
  const synthetic::Box box{Vec3(-0.5, -0.5, 4.0), Vec3(0.5, 0.5, 5.0)};
  const CameraIntrinsics k{100, 100, 31.5, 23.5, 64, 48};
  const Vec3 centre(0, 0, 4.5);
  const std::vector<Pose> poses{Pose::identity(), synthetic::look_at(Vec3(2.0, 0.3, 1.0), centre),
                                synthetic::look_at(Vec3(-1.5, -1.5, 1.5), centre)};
  std::vector<Frame> gt_frames, pred_frames;
  for (const auto& pose : poses) {
    const auto gt = synthetic::render_box(k, box, pose);
    // A perfect canonical-space prediction, mapped back to metric depth.
    const auto bundle = canonicalize_label(gt, ImageBuffer::filled(64, 48, 0.5), k);
    gt_frames.push_back({gt, k, pose});
    pred_frames.push_back({decanonicalize(bundle.depth_c, bundle), k, pose});
  }
  const auto gt_cloud = fuse_frames(gt_frames);
  const auto ev = evaluate_reconstruction(pred_frames, gt_cloud, 0.05);
  const auto fused = fuse_frames(pred_frames);
  double off_surface = 0.0;
  for (const auto& p : fused.points) {
    off_surface = std::max(off_surface, oracle::box_surface_distance(box.lo, box.hi, p));
  }
  auto index_of = [&](int x, int y) {
    std::size_t idx = 0;
    const auto& d = pred_frames[0].depth;
    for (int j = 0; j < d.height(); ++j)
      for (int i = 0; i < d.width(); ++i) {
        if (i == x && j == y) return idx;
        idx += d.is_valid(i, j);
      }
    return idx;
  };
  const double top = measure_distance(fused, index_of(19, 11), index_of(44, 11));
  const double side = measure_distance(fused, index_of(19, 11), index_of(19, 36));
  const double edge_err = std::max(std::abs(top - 1.0), std::abs(side - 1.0));
  const auto& m = ev.metrics;
  return {m.chamfer_l1 < 1e-6 && m.fscore == 1.0 && off_surface < 1e-6 && edge_err < 1e-9,
          Detail()("points", fused.size())("chamfer", m.chamfer_l1)("fscore", m.fscore)(
              "max_surface_dist", off_surface)("edge", top)("edge_err", edge_err)
              .str()};
}

Outcome ScaleShiftRecovery() {
  double worst = 0.0;
  bool delta_ok = true;
  int seed = 3;
  for (auto [s0, t0] : {std::pair{2.5, -0.75}, {0.4, 1.2}, {13.0, 0.0}}) {
    const auto gt = synthetic::smooth_depth(32, 24, seed++);
    const auto pred = Affine(gt, 1.0 / s0, -t0 / s0);
    const auto a = scale_shift_align(pred, gt, All(gt));
    worst = std::max({worst, std::abs(a.scale - s0), std::abs(a.shift - t0)});
    delta_ok = delta_ok && depth_metrics(a.aligned, gt, All(gt)).delta1 == 1.0;
  }
  return {worst < 1e-9 && delta_ok, Detail()("max_param_err", worst)("delta1_is_1", delta_ok).str()};
}

Outcome DepthMetricCases() {
  const auto gt = synthetic::random_depth(32, 32, 1);
  const auto m1 = depth_metrics(Affine(gt, 1.1, 0.0), gt, All(gt));
  const auto m3 = depth_metrics(Affine(gt, 1.3, 0.0), gt, All(gt));
  return {std::abs(m1.absrel - 0.1) < 1e-12 && m1.delta1 == 1.0 && m3.delta1 == 0.0 && m3.delta2 == 1.0,
          Detail()("absrel_1.1", m1.absrel)("d1_1.1", m1.delta1)("d1_1.3", m3.delta1)("d2_1.3", m3.delta2)
              .str()};
}

Outcome CodecRoundTrips() {
  auto d = oracle::float_grid(37, 23, 77);
  for (std::size_t i = 0; i < d.values.size(); i += 9) d.valid[i] = 0;
  const auto pfm = io::depth_from_pfm(io::decode_pfm(io::encode_pfm(io::depth_to_pfm(d))));
  int pfm_diff = 0;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    pfm_diff += pfm.valid[i] != d.valid[i] || (d.valid[i] && pfm.values[i] != d.values[i]);
  }

  Rng rng(5);
  PointCloud cloud;
  for (int i = 0; i < 300; ++i) {
    auto f = [&] { return static_cast<double>(static_cast<float>(rng.uniform(-10, 10))); };
    cloud.points.emplace_back(f(), f(), f());
    cloud.normals.emplace_back(f(), f(), f());
    cloud.colors.push_back({static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(3 * i),
                            static_cast<std::uint8_t>(255 - i % 256)});
  }
  const auto ply = io::decode_ply(io::encode_ply(cloud, io::PlyFormat::kBinaryLittleEndian)).cloud;
  const bool ply_same =
      ply.points == cloud.points && ply.normals == cloud.normals && ply.colors == cloud.colors;

  const auto metric = synthetic::random_depth(40, 30, 6, 0.01, 250.0);
  const auto png = io::decode_png16_depth(io::encode_png16_depth(metric));
  double png_err = 0.0;
  int png_mask = 0;
  for (std::size_t i = 0; i < metric.values.size(); ++i) {
    png_mask += !png.valid[i];
    png_err = std::max(png_err, std::abs(png.values[i] - metric.values[i]));
  }
  return {pfm_diff == 0 && ply_same && png_mask == 0 && png_err <= 1.0 / 256.0,
          Detail()("pfm_diffs", pfm_diff)("ply_bitwise", ply_same)("png16_max_err", png_err)(
              "png16_lost", png_mask)
              .str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"canonical transform round trips", CanonicalRoundTrips},
      {"focal ambiguity resolved in canonical space", FocalAmbiguity},
      {"pixel size does not change geometry", PixelSizeInvariance},
      {"normals are depth-scale agnostic", NormalScaleAgnostic},
      {"loss zeros and invariances", LossZerosAndInvariances},
      {"analytic gradients match central differences", GradientChecks},
      {"schedule arithmetic", ScheduleArithmetic},
      {"refinement demo decreases consistency", RefinementDemo},
      {"pixel-pooled vs sample-mean protocols", ProtocolDiscrepancy},
      {"chamfer and F-score equal brute force", ChamferBruteForce},
      {"ICP recovers rigid transforms", IcpRecovery},
      {"synthetic box reconstruction", BoxReconstruction},
      {"scale-shift alignment", ScaleShiftRecovery},
      {"depth metric analytic cases", DepthMetricCases},
      {"codec round trips", CodecRoundTrips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu: %s (%s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                o.detail.c_str());
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
