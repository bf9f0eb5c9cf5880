// mdk: command-line front end for the metric depth toolkit.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdk/io.hpp"
#include "mdk/mdk.hpp"
#include "mdk/synthetic.hpp"

namespace fs = std::filesystem;
using mdk::io::Json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string protocol = "pixel-pooled";
  bool include_invalid = false;
  double canonical_focal = mdk::kDefaultCanonicalFocal;
  double tau = mdk::kDefaultFscoreTau;
  std::vector<double> clamp;
  std::string out;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

mdk::Protocol protocol_of(const Globals& g) {
  mdk::Protocol p;
  p.pooling = g.protocol == "sample-mean" ? mdk::Pooling::kSampleMean : mdk::Pooling::kPixelPooled;
  p.exclude_invalid = !g.include_invalid;
  return p;
}

Json report(const std::string& command, const Globals& g) {
  Json r = mdk::io::make_report(command);
  r["seed"] = g.seed;
  return r;
}

void add_file(Json& r, const std::string& role, const fs::path& path) {
  r["files"].push_back({{"role", role}, {"path", path.string()}});
}

void emit(const Json& r, const Globals& g) {
  const std::string text = r.dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
  } else {
    mdk::io::write_file_atomic(g.out, text);
  }
}

mdk::DepthMap maybe_clamp(mdk::DepthMap d, const Globals& g) {
  if (g.clamp.empty()) return d;
  return mdk::clamp_depth(std::move(d), g.clamp[0], g.clamp[1]);
}

Json clamp_json(const Globals& g) {
  if (g.clamp.empty()) return nullptr;
  return {g.clamp[0], g.clamp[1]};
}

std::vector<mdk::Frame> load_frames(const std::vector<std::string>& depths, const std::string& intr_path,
                                    const std::string& poses_path, Json& r) {
  const auto intr = mdk::io::read_intrinsics(intr_path).intr;
  const auto poses = mdk::io::read_poses(poses_path);
  if (poses.size() != depths.size()) {
    throw mdk::Error(mdk::ErrorCode::kLengthMismatch,
                     std::to_string(depths.size()) + " depth maps but " + std::to_string(poses.size()) +
                         " poses");
  }
  add_file(r, "intrinsics", intr_path);
  add_file(r, "poses", poses_path);
  std::vector<mdk::Frame> frames;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    frames.push_back({mdk::io::read_depth(depths[i]), intr, poses[i]});
    add_file(r, "depth", depths[i]);
  }
  return frames;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric depth toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--protocol", g.protocol, "Dataset reduction")
      ->check(CLI::IsMember({"pixel-pooled", "sample-mean"}));
  app.add_flag("--include-invalid", g.include_invalid, "Keep pixels flagged invalid when values are usable");
  app.add_option("--canonical-focal", g.canonical_focal, "Canonical focal length in pixels")
      ->check(CLI::PositiveNumber);
  app.add_option("--tau", g.tau, "F-score threshold in meters")->check(CLI::PositiveNumber);
  app.add_option("--clamp", g.clamp, "Clamp output depth to min,max")->delimiter(',')->expected(2);
  app.add_option("--out", g.out, "Write the report here instead of stdout");

  // canonicalize
  std::string c_depth, c_intr, c_image, c_mode = "label", c_depth_out, c_bundle_out, c_image_out;
  auto* canon = app.add_subcommand("canonicalize", "Map depth (and image) into the canonical camera");
  canon->add_option("--depth", c_depth)->required();
  canon->add_option("--intrinsics", c_intr)->required();
  canon->add_option("--image", c_image, "PPM or PNG image");
  canon->add_option("--mode", c_mode)->check(CLI::IsMember({"label", "image"}));
  canon->add_option("--depth-out", c_depth_out)->required();
  canon->add_option("--bundle-out", c_bundle_out, "Sidecar JSON (default: <depth-out>.json)");
  canon->add_option("--image-out", c_image_out, "Canonical image as PPM");

  // decanonicalize
  std::string d_depth, d_bundle, d_depth_out;
  auto* decanon = app.add_subcommand("decanonicalize", "Restore metric depth from a canonical prediction");
  decanon->add_option("--depth", d_depth)->required();
  decanon->add_option("--bundle", d_bundle)->required();
  decanon->add_option("--depth-out", d_depth_out)->required();

  // depth2normal
  std::string n_depth, n_intr, n_out;
  int n_window = mdk::kDefaultNormalWindow;
  auto* d2n = app.add_subcommand("depth2normal", "Least-squares normals from depth");
  d2n->add_option("--depth", n_depth)->required();
  d2n->add_option("--intrinsics", n_intr)->required();
  d2n->add_option("--window", n_window)->check(CLI::IsMember({3, 5, 7}));
  d2n->add_option("--normal-out", n_out)->required();

  // depth2cloud
  std::string p_depth, p_intr, p_out;
  int p_stride = 1;
  bool p_ascii = false;
  auto* d2c = app.add_subcommand("depth2cloud", "Back-project depth to a PLY cloud");
  d2c->add_option("--depth", p_depth)->required();
  d2c->add_option("--intrinsics", p_intr)->required();
  d2c->add_option("--stride", p_stride)->check(CLI::PositiveNumber);
  d2c->add_option("--cloud-out", p_out)->required();
  d2c->add_flag("--ascii", p_ascii);

  // fuse
  std::vector<std::string> f_depths;
  std::string f_intr, f_poses, f_out;
  int f_stride = 1;
  bool f_ascii = false;
  auto* fuse = app.add_subcommand("fuse", "Fuse depth maps with camera-to-world poses");
  fuse->add_option("--depth", f_depths, "One per pose, in pose-file order")->required();
  fuse->add_option("--intrinsics", f_intr)->required();
  fuse->add_option("--poses", f_poses)->required();
  fuse->add_option("--stride", f_stride)->check(CLI::PositiveNumber);
  fuse->add_option("--cloud-out", f_out)->required();
  fuse->add_flag("--ascii", f_ascii);

  // refine-demo
  int r_steps = 8, r_width = 48, r_height = 36;
  double r_noise = 0.01, r_step = 0.5, r_gamma = 0.9;
  auto* refine = app.add_subcommand("refine-demo", "Consistency descent on a noisy synthetic plane");
  refine->add_option("--steps", r_steps)->check(CLI::NonNegativeNumber);
  refine->add_option("--width", r_width)->check(CLI::Range(8, 4096));
  refine->add_option("--height", r_height)->check(CLI::Range(8, 4096));
  refine->add_option("--noise", r_noise, "Relative depth noise")->check(CLI::NonNegativeNumber);
  refine->add_option("--step-size", r_step)->check(CLI::NonNegativeNumber);
  refine->add_option("--gamma", r_gamma)->check(CLI::Range(0.0, 1.0));

  // loss
  std::string l_pred, l_gt, l_intr, l_pred_n, l_gt_n;
  int l_triplets = 1000;
  double l_lambda = 0.5;
  auto* loss = app.add_subcommand("loss", "Score a prediction with the training losses");
  loss->add_option("--pred", l_pred)->required();
  loss->add_option("--gt", l_gt)->required();
  loss->add_option("--intrinsics", l_intr)->required();
  loss->add_option("--pred-normal", l_pred_n);
  loss->add_option("--gt-normal", l_gt_n);
  loss->add_option("--triplets", l_triplets)->check(CLI::PositiveNumber);
  loss->add_option("--lambda", l_lambda)->check(CLI::Range(0.0, 1.0));

  // eval-depth
  std::vector<std::string> e_pred, e_gt;
  bool e_align = false;
  auto* evd = app.add_subcommand("eval-depth", "Depth metrics over one or more pairs");
  evd->add_option("--pred", e_pred)->required();
  evd->add_option("--gt", e_gt)->required();
  evd->add_flag("--align", e_align, "Fit scale and shift per image first");

  // eval-normal
  std::vector<std::string> en_pred, en_gt;
  auto* evn = app.add_subcommand("eval-normal", "Normal metrics over one or more pairs");
  evn->add_option("--pred", en_pred)->required();
  evn->add_option("--gt", en_gt)->required();

  // eval-recon
  std::string er_pred, er_gt, er_intr, er_poses;
  std::vector<std::string> er_depths;
  bool er_icp = false;
  auto* evr = app.add_subcommand("eval-recon", "Chamfer and F-score against a reference cloud");
  evr->add_option("--pred", er_pred, "Predicted PLY cloud");
  evr->add_option("--depth", er_depths, "Predicted depth maps to fuse instead of --pred");
  evr->add_option("--intrinsics", er_intr);
  evr->add_option("--poses", er_poses);
  evr->add_option("--gt", er_gt)->required();
  evr->add_flag("--icp", er_icp, "Register the prediction to the reference first");

  // measure
  std::string m_cloud;
  std::size_t m_a = 0, m_b = 0;
  auto* measure = app.add_subcommand("measure", "Distance between two cloud points");
  measure->add_option("--cloud", m_cloud)->required();
  measure->add_option("--a", m_a)->required();
  measure->add_option("--b", m_b)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << Json{{"error", "Usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (!g.clamp.empty() && g.clamp[0] > g.clamp[1]) throw UsageError("--clamp needs min <= max");

    if (*canon) {
      Json r = report("canonicalize", g);
      const auto k = mdk::io::read_intrinsics(c_intr).intr;
      const auto depth = mdk::io::read_depth(c_depth);
      add_file(r, "depth", c_depth);
      add_file(r, "intrinsics", c_intr);
      const auto image = c_image.empty() ? mdk::ImageBuffer::filled(depth.width(), depth.height(), 0.0)
                                         : mdk::io::read_image(c_image);
      if (!c_image.empty()) add_file(r, "image", c_image);
      const auto b = c_mode == "label" ? mdk::canonicalize_label(depth, image, k, g.canonical_focal)
                                       : mdk::canonicalize_image(depth, image, k, g.canonical_focal);
      const std::string bundle_out = c_bundle_out.empty() ? c_depth_out + ".json" : c_bundle_out;
      mdk::io::write_depth(c_depth_out, b.depth_c);
      mdk::io::write_file_atomic(bundle_out, mdk::io::bundle_json(b).dump(2) + "\n");
      add_file(r, "depth_out", c_depth_out);
      add_file(r, "bundle_out", bundle_out);
      if (!c_image_out.empty()) {
        mdk::io::write_ppm(c_image_out, b.image_c);
        add_file(r, "image_out", c_image_out);
      }
      r["canonical_focal"] = g.canonical_focal;
      r["bundle"] = mdk::io::bundle_json(b);
      emit(r, g);
    } else if (*decanon) {
      Json r = report("decanonicalize", g);
      const auto b = mdk::io::read_bundle(d_bundle);
      const auto out = maybe_clamp(mdk::decanonicalize(mdk::io::read_depth(d_depth), b), g);
      mdk::io::write_depth(d_depth_out, out);
      add_file(r, "depth", d_depth);
      add_file(r, "bundle", d_bundle);
      add_file(r, "depth_out", d_depth_out);
      r["clamp"] = clamp_json(g);
      emit(r, g);
    } else if (*d2n) {
      Json r = report("depth2normal", g);
      const auto n = mdk::normals_from_depth(mdk::io::read_depth(n_depth),
                                             mdk::io::read_intrinsics(n_intr).intr, n_window);
      mdk::io::write_normal_pfm(n_out, n);
      add_file(r, "depth", n_depth);
      add_file(r, "intrinsics", n_intr);
      add_file(r, "normal_out", n_out);
      r["window"] = n_window;
      r["valid_pixels"] = mdk::count(n.valid);
      emit(r, g);
    } else if (*d2c) {
      Json r = report("depth2cloud", g);
      const auto cloud = mdk::depth_to_pointcloud(mdk::io::read_depth(p_depth),
                                                  mdk::io::read_intrinsics(p_intr).intr, p_stride);
      mdk::io::write_ply(p_out, cloud, p_ascii ? mdk::io::PlyFormat::kAscii : mdk::io::PlyFormat::kBinaryLittleEndian);
      add_file(r, "depth", p_depth);
      add_file(r, "intrinsics", p_intr);
      add_file(r, "cloud_out", p_out);
      r["points"] = cloud.size();
      emit(r, g);
    } else if (*fuse) {
      Json r = report("fuse", g);
      const auto frames = load_frames(f_depths, f_intr, f_poses, r);
      const auto cloud = mdk::fuse_frames(frames, f_stride);
      mdk::io::write_ply(f_out, cloud, f_ascii ? mdk::io::PlyFormat::kAscii : mdk::io::PlyFormat::kBinaryLittleEndian);
      add_file(r, "cloud_out", f_out);
      r["frames"] = frames.size();
      r["points"] = cloud.size();
      emit(r, g);
    } else if (*refine) {
      Json r = report("refine-demo", g);
      const mdk::CameraIntrinsics k{r_width * 1.25, r_width * 1.25, (r_width - 1) / 2.0, (r_height - 1) / 2.0,
                                    r_width, r_height};
      mdk::RefineState init;
      init.depth_c = mdk::synthetic::add_relative_noise(
          mdk::synthetic::render_plane(k, mdk::Vec3(0.3, -0.2, -1).normalized(), -3.0), r_noise, g.seed);
      init.normal_u = mdk::Grid<mdk::Vec3>(r_width, r_height, mdk::Vec3(0, 0, -1));
      mdk::ConsistencyDescentConfig cfg;
      cfg.intr = k;
      cfg.step_size = r_step;
      const auto traj = mdk::run_refinement(init, mdk::consistency_descent_operator(cfg), r_steps);
      std::vector<double> losses;
      for (const auto& s : traj) losses.push_back(mdk::consistency_dn(mdk::normalized_normals(s.normal_u), s.depth_c, k));
      bool decreasing = true;
      for (std::size_t i = 1; i < losses.size(); ++i) decreasing = decreasing && losses[i] < losses[i - 1];
      r["steps"] = r_steps;
      r["noise"] = r_noise;
      r["consistency"] = losses;
      r["strictly_decreasing"] = decreasing;
      r["final_over_initial"] = losses.back() / losses.front();
      r["gamma_total"] = mdk::gamma_total(std::span<const double>(losses).subspan(1), {r_gamma, r_steps});
      emit(r, g);
    } else if (*loss) {
      Json r = report("loss", g);
      const auto pred = mdk::io::read_depth(l_pred);
      const auto gt = mdk::io::read_depth(l_gt);
      const auto k = mdk::io::read_intrinsics(l_intr).intr;
      add_file(r, "pred", l_pred);
      add_file(r, "gt", l_gt);
      add_file(r, "intrinsics", l_intr);
      mdk::DepthLossConfig cfg;
      cfg.seed = g.seed;
      cfg.vnl_triplets = l_triplets;
      cfg.silog_lambda = l_lambda;
      const auto mask = mdk::full_mask(gt.width(), gt.height());
      const auto b = mdk::depth_loss(pred, gt, mask, k, cfg);
      r["depth"] = {{"silog", b.silog}, {"vnl", b.vnl}, {"rpnl", b.rpnl}, {"total", b.total}};
      std::optional<double> l_n, l_dn;
      if (!l_pred_n.empty()) {
        const auto pn = mdk::io::read_normal_pfm(l_pred_n);
        add_file(r, "pred_normal", l_pred_n);
        l_dn = mdk::consistency_dn(pn, pred, k);
        r["consistency_dn"] = *l_dn;
        if (!l_gt_n.empty()) {
          const auto gn = mdk::io::read_normal_pfm(l_gt_n);
          add_file(r, "gt_normal", l_gt_n);
          l_n = mdk::normal_angular_loss(pn, gn, mdk::full_mask(gn.width(), gn.height()));
          r["normal_angular"] = *l_n;
        }
      }
      if (l_n && l_dn) r["step_total"] = mdk::compose_step_loss(b.total, *l_n, *l_dn);
      emit(r, g);
    } else if (*evd) {
      if (e_pred.size() != e_gt.size()) throw UsageError("--pred and --gt counts differ");
      Json r = report("eval-depth", g);
      std::vector<mdk::DepthSample> samples;
      Json alignments = Json::array();
      for (std::size_t i = 0; i < e_pred.size(); ++i) {
        auto pred = mdk::io::read_depth(e_pred[i]);
        const auto gt = mdk::io::read_depth(e_gt[i]);
        add_file(r, "pred", e_pred[i]);
        add_file(r, "gt", e_gt[i]);
        if (!pred.values.same_shape(gt.values)) {
          throw mdk::Error(mdk::ErrorCode::kShapeMismatch, e_pred[i] + " and " + e_gt[i] + " differ in size");
        }
        if (e_align) {
          const auto a = mdk::scale_shift_align(pred, gt, mdk::full_mask(gt.width(), gt.height()));
          alignments.push_back({{"scale", a.scale}, {"shift", a.shift}, {"shift_only", a.shift_only}});
          pred = a.aligned;
        }
        pred = maybe_clamp(std::move(pred), g);
        samples.push_back({std::move(pred), gt, mdk::full_mask(gt.width(), gt.height())});
      }
      const auto p = protocol_of(g);
      r["protocol"] = mdk::io::to_json(p);
      r["clamp"] = clamp_json(g);
      if (e_align) r["alignment"] = alignments;
      r["depth"] = mdk::io::to_json(mdk::depth_metrics(samples, p));
      emit(r, g);
    } else if (*evn) {
      if (en_pred.size() != en_gt.size()) throw UsageError("--pred and --gt counts differ");
      Json r = report("eval-normal", g);
      std::vector<mdk::ErrorMap> maps;
      for (std::size_t i = 0; i < en_pred.size(); ++i) {
        const auto pn = mdk::io::read_normal_pfm(en_pred[i]);
        const auto gn = mdk::io::read_normal_pfm(en_gt[i]);
        add_file(r, "pred", en_pred[i]);
        add_file(r, "gt", en_gt[i]);
        maps.push_back(mdk::normal_error_map(pn, gn, mdk::full_mask(gn.width(), gn.height())));
      }
      const auto p = protocol_of(g);
      r["protocol"] = mdk::io::to_json(p);
      r["normal"] = mdk::io::to_json(mdk::normal_metrics(maps, p));
      emit(r, g);
    } else if (*evr) {
      Json r = report("eval-recon", g);
      const auto gt = mdk::io::read_ply(er_gt).cloud;
      add_file(r, "gt", er_gt);
      mdk::ReconEvaluation ev;
      if (!er_depths.empty()) {
        if (er_intr.empty() || er_poses.empty()) throw UsageError("--depth needs --intrinsics and --poses");
        ev = mdk::evaluate_reconstruction(load_frames(er_depths, er_intr, er_poses, r), gt, g.tau, er_icp);
      } else {
        if (er_pred.empty()) throw UsageError("give --pred or --depth");
        auto pred = mdk::io::read_ply(er_pred).cloud;
        add_file(r, "pred", er_pred);
        if (pred.empty()) throw mdk::Error(mdk::ErrorCode::kEmptyCloud, er_pred + " has no points");
        if (er_icp) {
          ev.alignment = mdk::icp_align(pred, gt).pose;
          pred = mdk::transform_cloud(pred, ev.alignment);
        }
        ev.pred_points = pred.size();
        ev.metrics = mdk::chamfer_fscore(pred, gt, g.tau);
      }
      r["tau"] = g.tau;
      r["icp"] = er_icp;
      if (er_icp) r["alignment"] = mdk::io::to_json(ev.alignment);
      r["pred_points"] = ev.pred_points;
      r["recon"] = mdk::io::to_json(ev.metrics);
      emit(r, g);
    } else if (*measure) {
      Json r = report("measure", g);
      const auto cloud = mdk::io::read_ply(m_cloud).cloud;
      add_file(r, "cloud", m_cloud);
      r["a"] = m_a;
      r["b"] = m_b;
      r["distance"] = mdk::measure_distance(cloud, m_a, m_b);
      emit(r, g);
    }
  } catch (const UsageError& e) {
    std::cerr << Json{{"error", "Usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  } catch (const mdk::Error& e) {
    std::cerr << Json{{"error", mdk::ErrorCodeName(e.code())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
