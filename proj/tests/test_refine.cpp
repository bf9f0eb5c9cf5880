#include <cmath>

#include <gtest/gtest.h>

#include "mdk/losses.hpp"
#include "mdk/refine.hpp"
#include "mdk/synthetic.hpp"

namespace mdk {
namespace {

RefineState OnePixel(double d, const Vec3& n) {
  RefineState s;
  s.depth_c = DepthMap::from_values(Grid<double>(1, 1, d));
  s.normal_u = Grid<Vec3>(1, 1, n);
  return s;
}

RefineUpdate Delta(int w, int h, double dd, const Vec3& dn) {
  return {Grid<double>(w, h, dd), Grid<Vec3>(w, h, dn), {}};
}

TEST(ApplyUpdate, Examples) {
  auto s = apply_update(OnePixel(1.0, Vec3::Zero()), Delta(1, 1, 0.5, Vec3::Zero()));
  EXPECT_EQ(s.depth_c.values(0, 0), 1.5);
  EXPECT_EQ(s.step, 1);

  RefineState init = OnePixel(2.0, {0, 3, 4});
  init.hidden = 7;
  s = apply_update(init, Delta(1, 1, 0.0, Vec3::Zero()));
  EXPECT_EQ(s.depth_c.values, init.depth_c.values);
  EXPECT_EQ(s.normal_u, init.normal_u);
  EXPECT_FALSE(s.hidden.has_value());

  s = apply_update(OnePixel(1.0, {0, 3, 4}), Delta(1, 1, 0.0, {0, -3, -4}));
  EXPECT_EQ(s.normal_u(0, 0), Vec3::Zero());
}

TEST(ApplyUpdate, NoClamping) {
  const auto s = apply_update(OnePixel(0.1, {0, 0, 1}), Delta(1, 1, -0.5, Vec3::Zero()));
  EXPECT_DOUBLE_EQ(s.depth_c.values(0, 0), -0.4);
}

TEST(ApplyUpdate, ShapeMismatch) {
  try {
    apply_update(OnePixel(1.0, Vec3::Zero()), Delta(2, 1, 0.0, Vec3::Zero()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(RunRefinement, LengthAndZeroOperator) {
  RefineState init = OnePixel(3.0, {0, 0, -1});
  const auto one = run_refinement(init, zero_operator(), 0);
  ASSERT_EQ(one.size(), 2u);
  EXPECT_EQ(one[1].step, 1);
  const auto direct = apply_update(init, zero_operator()(init));
  EXPECT_EQ(one[1].depth_c.values, direct.depth_c.values);

  const auto five = run_refinement(init, zero_operator(), 4);
  ASSERT_EQ(five.size(), 6u);
  for (std::size_t t = 0; t < five.size(); ++t) {
    EXPECT_EQ(five[t].depth_c.values, init.depth_c.values);
    EXPECT_EQ(five[t].normal_u, init.normal_u);
    EXPECT_EQ(five[t].step, static_cast<int>(t));
  }
  EXPECT_THROW(run_refinement(init, zero_operator(), -1), Error);
}

TEST(RunRefinement, ResidualSemantics) {
  // Deterministic operator whose deltas depend on the state.
  UpdateOperator op = [](const RefineState& s) {
    RefineUpdate u = Delta(s.width(), s.height(), 0.0, Vec3::Zero());
    for (std::size_t i = 0; i < u.delta_depth.size(); ++i) {
      u.delta_depth[i] = 0.1 * std::sin(s.depth_c.values[i] + s.step);
      u.delta_normal[i] = Vec3(0.01 * s.step, -0.02, 0.003 * s.depth_c.values[i]);
    }
    return u;
  };
  RefineState init;
  init.depth_c = synthetic::random_depth(6, 5, 3);
  init.normal_u = Grid<Vec3>(6, 5, Vec3(0, 0, -1));
  const auto traj = run_refinement(init, op, 5);
  RefineState acc = init;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const auto u = op(traj[k - 1]);
    for (std::size_t i = 0; i < acc.depth_c.values.size(); ++i) {
      acc.depth_c.values[i] += u.delta_depth[i];
      acc.normal_u[i] += u.delta_normal[i];
    }
    EXPECT_EQ(traj[k].depth_c.values, acc.depth_c.values);
    EXPECT_EQ(traj[k].normal_u, acc.normal_u);
  }
}

CanonicalBundle IdentityBundle(int w, int h) {
  const CameraIntrinsics k{1000, 1000, w / 2.0, h / 2.0, w, h};
  return canonicalize_label(DepthMap::from_values(Grid<double>(w, h, 1.0)), ImageBuffer{}, k, 1000);
}

TEST(Finalize, ReluNormalizeInvalid) {
  RefineState s;
  s.depth_c = DepthMap::from_values(Grid<double>(2, 1, 1.0));
  s.depth_c.values(0, 0) = -0.2;
  s.depth_c.valid(0, 0) = 1;
  s.normal_u = Grid<Vec3>(2, 1, Vec3(0, 3, 4));
  s.normal_u(1, 0) = Vec3::Zero();
  const auto out = finalize(s, 1, IdentityBundle(2, 1));
  EXPECT_EQ(out.depth.values(0, 0), 0.0);
  EXPECT_EQ(out.depth.values(1, 0), 1.0);
  EXPECT_LT((out.normals.vectors(0, 0) - Vec3(0, 0.6, 0.8)).norm(), 1e-15);
  EXPECT_TRUE(out.normals.valid(0, 0));
  EXPECT_FALSE(out.normals.valid(1, 0));
}

TEST(Finalize, UpsamplesAndDecanonicalizes) {
  const CameraIntrinsics k{500, 500, 16, 12, 32, 24};
  const auto bundle =
      canonicalize_label(DepthMap::from_values(Grid<double>(32, 24, 2.0)), ImageBuffer{}, k, 1000);
  RefineState s;
  s.depth_c = DepthMap::from_values(Grid<double>(8, 6, 4.0));
  s.normal_u = Grid<Vec3>(8, 6, Vec3(0, 0, -2));
  const auto out = finalize(s, kIntermediateDownscale, bundle);
  ASSERT_EQ(out.depth.width(), 32);
  ASSERT_EQ(out.depth.height(), 24);
  for (double v : out.depth.values) ASSERT_DOUBLE_EQ(v, 2.0);
  for (const auto& n : out.normals.vectors) ASSERT_LT((n - Vec3(0, 0, -1)).norm(), 1e-15);
  EXPECT_THROW(finalize(s, 0, bundle), Error);
}

TEST(Finalize, ImageModeRestoresResolution) {
  const CameraIntrinsics k{500, 500, 20, 20, 40, 40};
  const auto d = DepthMap::from_values(Grid<double>(40, 40, 3.0));
  const auto bundle = canonicalize_image(d, ImageBuffer::filled(40, 40, 0), k, 1000);
  ASSERT_EQ(bundle.depth_c.width(), 80);
  RefineState s;
  s.depth_c = DepthMap::from_values(Grid<double>(20, 20, 3.0));
  s.normal_u = Grid<Vec3>(20, 20, Vec3(1, 0, 0));
  const auto out = finalize(s, 4, bundle);
  EXPECT_EQ(out.depth.width(), 40);
  EXPECT_EQ(out.normals.width(), 40);
  for (double v : out.depth.values) ASSERT_DOUBLE_EQ(v, 3.0);
}

TEST(Finalize, ZeroOperatorIsIdentity) {
  RefineState init;
  init.depth_c = synthetic::add_relative_noise(synthetic::smooth_depth(10, 8, 2), 0.3, 1);
  init.depth_c.values(3, 3) = -1.0;
  init.normal_u = Grid<Vec3>(10, 8, Vec3(0.2, -0.1, -1));
  const auto bundle = IdentityBundle(40, 32);
  const auto base = finalize(init, 4, bundle);
  for (int t : {0, 3, 8}) {
    const auto traj = run_refinement(init, zero_operator(), t);
    const auto out = finalize(traj.back(), 4, bundle);
    EXPECT_EQ(out.depth.values, base.depth.values);
    EXPECT_EQ(out.normals.vectors, base.normals.vectors);
  }
  for (double v : base.depth.values) EXPECT_GE(v, 0.0);
}

const CameraIntrinsics kLow{60, 60, 23.5, 17.5, 48, 36};

RefineState NoisyPlane(double sigma) {
  RefineState s;
  s.depth_c = synthetic::add_relative_noise(
      synthetic::render_plane(kLow, Vec3(0.3, -0.2, -1).normalized(), -3.0), sigma, 7);
  s.normal_u = Grid<Vec3>(48, 36, Vec3(0, 0, -1));
  return s;
}

double Consistency(const RefineState& s) {
  return consistency_dn(normalized_normals(s.normal_u), s.depth_c, kLow);
}

TEST(ConsistencyDescent, FixedPoint) {
  RefineState s;
  s.depth_c = synthetic::smooth_depth(48, 36, 4);
  s.normal_u = normals_from_depth(s.depth_c, kLow).vectors;
  ConsistencyDescentConfig cfg;
  cfg.intr = kLow;
  const auto u = consistency_descent_operator(cfg)(s);
  double worst = 0.0;
  for (const auto& v : u.delta_normal) worst = std::max(worst, v.cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-9);
  ASSERT_TRUE(u.hidden.has_value());
  EXPECT_EQ(std::any_cast<NormalMap>(u.hidden).vectors, s.normal_u);
}

TEST(ConsistencyDescent, ZeroStep) {
  ConsistencyDescentConfig cfg;
  cfg.intr = kLow;
  cfg.step_size = 0.0;
  const auto u = consistency_descent_operator(cfg)(NoisyPlane(0.01));
  for (double v : u.delta_depth) ASSERT_EQ(v, 0.0);
  for (const auto& v : u.delta_normal) ASSERT_EQ(v, Vec3::Zero());
  cfg.step_size = -1.0;
  EXPECT_THROW(consistency_descent_operator(cfg), Error);
}

TEST(ConsistencyDescent, DecreasesOnNoisyPlane) {
  ConsistencyDescentConfig cfg;
  cfg.intr = kLow;
  const auto traj = run_refinement(NoisyPlane(0.01), consistency_descent_operator(cfg), 3);
  EXPECT_LT(Consistency(traj.back()), Consistency(traj.front()));
}

TEST(ConsistencyDescent, TrajectoryFeedsGammaSchedule) {
  ConsistencyDescentConfig cfg;
  cfg.intr = kLow;
  const int steps = 4;
  const auto traj = run_refinement(NoisyPlane(0.01), consistency_descent_operator(cfg), steps);
  std::vector<double> losses;
  for (std::size_t t = 1; t < traj.size(); ++t) losses.push_back(Consistency(traj[t]));
  const double total = gamma_total(losses, {0.9, steps});
  double expect = 0.0;
  for (int t = 0; t <= steps; ++t) expect += std::pow(0.9, steps - t) * losses[t];
  EXPECT_DOUBLE_EQ(total, expect);
}

}  // namespace
}  // namespace mdk
