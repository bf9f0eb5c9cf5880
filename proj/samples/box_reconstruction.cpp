// Renders three views of a unit box, sends each depth map through the
// canonical camera and back, fuses the views and scores the result.

#include <cstdio>
#include <vector>

#include "mdk/mdk.hpp"

int main() {
  using namespace mdk;

  const synthetic::Box box{Vec3(-0.5, -0.5, 4.0), Vec3(0.5, 0.5, 5.0)};
  const CameraIntrinsics k{100, 100, 31.5, 23.5, 64, 48};
  const Vec3 centre(0, 0, 4.5);
  const std::vector<Pose> poses{Pose::identity(), synthetic::look_at({2.0, 0.3, 1.0}, centre),
                                synthetic::look_at({-1.5, -1.5, 1.5}, centre)};

  std::vector<Frame> gt, pred;
  for (const auto& pose : poses) {
    const DepthMap d = synthetic::render_box(k, box, pose);
    const auto bundle = canonicalize_label(d, ImageBuffer::filled(k.width, k.height, 0.5), k);
    std::printf("view: %zu px, omega_d %.3f\n", count(d.valid), bundle.omega_d);
    gt.push_back({d, k, pose});
    // Stand-in for a network: 2% too far in canonical space.
    DepthMap guess = bundle.depth_c;
    for (auto& v : guess.values) v *= 1.02;
    pred.push_back({decanonicalize(guess, bundle), k, pose});
  }

  const PointCloud reference = fuse_frames(gt);
  for (bool icp : {false, true}) {
    const auto ev = evaluate_reconstruction(pred, reference, kDefaultFscoreTau, icp);
    std::printf("icp=%d  chamfer %.5f  F %.4f  (P %.4f R %.4f)\n", icp, ev.metrics.chamfer_l1,
                ev.metrics.fscore, ev.metrics.precision, ev.metrics.recall);
  }

  // Pixels (19, 11) and (44, 11) of the first view see two front corners.
  const PointCloud first = depth_to_pointcloud(gt[0].depth, k);
  auto index_of = [&](int x, int y) {
    std::size_t i = 0;
    for (int v = 0; v < y; ++v)
      for (int u = 0; u < k.width; ++u) i += gt[0].depth.is_valid(u, v);
    for (int u = 0; u < x; ++u) i += gt[0].depth.is_valid(u, y);
    return i;
  };
  std::printf("front edge: %.9f m\n", measure_distance(first, index_of(19, 11), index_of(44, 11)));
  return 0;
}
