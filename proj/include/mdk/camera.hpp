#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Core>

#include "mdk/error.hpp"
#include "mdk/grid.hpp"
#include "mdk/resize.hpp"

namespace mdk {

/// Default focal length (pixels) of the canonical camera.
inline constexpr double kDefaultCanonicalFocal = 1000.0;

/// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    MDK_CHECK(fx > 0.0 && fy > 0.0 && std::isfinite(fx) && std::isfinite(fy),
              ErrorCode::kInvalidArgument, "focal lengths must be positive");
    MDK_CHECK(std::isfinite(cx) && std::isfinite(cy), ErrorCode::kInvalidArgument,
              "principal point must be finite");
    MDK_CHECK(width >= 1 && height >= 1, ErrorCode::kInvalidArgument,
              "image size must be at least 1x1");
  }

  /// Scalar focal used for canonical ratios; the mean of fx and fy.
  double focal() const noexcept { return 0.5 * (fx + fy); }

  /// Intrinsics of the same camera sampled on a grid `factor` times coarser.
  CameraIntrinsics downscaled(int factor) const {
    MDK_CHECK(factor >= 1, ErrorCode::kInvalidArgument, "factor must be >= 1");
    const double s = 1.0 / factor;
    return {fx * s, fy * s, (cx + 0.5) * s - 0.5, (cy + 0.5) * s - 0.5, width / factor,
            height / factor};
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Lens focal length and pixel pitch, both in micrometers.
struct PhysicalCamera {
  double focal_um = 0.0;
  double pixel_size_um = 0.0;

  void validate() const {
    MDK_CHECK(focal_um > 0.0 && pixel_size_um > 0.0, ErrorCode::kInvalidArgument,
              "physical focal and pixel size must be positive");
  }
};

/// Metric depth in meters with a per-pixel validity mask.
struct DepthMap {
  Grid<double> values;
  Mask valid;

  DepthMap() = default;
  DepthMap(Grid<double> v, Mask m) : values(std::move(v)), valid(std::move(m)) {
    MDK_CHECK(values.same_shape(valid), ErrorCode::kShapeMismatch,
              "depth values and mask differ in shape");
  }

  /// Marks every finite, strictly positive value valid.
  static DepthMap from_values(Grid<double> v) {
    Mask m(v.width(), v.height());
    for (std::size_t i = 0; i < v.size(); ++i) m[i] = (std::isfinite(v[i]) && v[i] > 0.0) ? 1 : 0;
    return DepthMap(std::move(v), std::move(m));
  }

  int width() const noexcept { return values.width(); }
  int height() const noexcept { return values.height(); }
  bool is_valid(int x, int y) const { return valid(x, y) != 0; }
};

/// RGB image, channels normalized to [0, 1].
struct ImageBuffer {
  Grid<Vec3> pixels;

  int width() const noexcept { return pixels.width(); }
  int height() const noexcept { return pixels.height(); }

  static ImageBuffer filled(int width, int height, double gray) {
    return {Grid<Vec3>(width, height, Vec3::Constant(gray))};
  }
};

enum class CanonicalMode { kLabel, kImage };

/// Result of moving a sample into the canonical camera space, with everything
/// needed to undo it.
struct CanonicalBundle {
  CanonicalMode mode = CanonicalMode::kLabel;
  DepthMap depth_c;
  ImageBuffer image_c;
  CameraIntrinsics intr_c;
  double omega_d = 1.0;
  double omega_r = 1.0;
  /// Scalar focal the ratios were computed from.
  double source_focal = 0.0;
  CameraIntrinsics original_intr;
  int original_width = 0;
  int original_height = 0;
};

/// Pixel-represented focal length: lens focal over pixel pitch.
inline double pixel_focal(const PhysicalCamera& cam) {
  cam.validate();
  return cam.focal_um / cam.pixel_size_um;
}

inline Eigen::Vector2d project(const Vec3& point, const CameraIntrinsics& intr) {
  MDK_CHECK(point.z() > 0.0, ErrorCode::kNonPositiveDepth, "point must lie in front of the camera");
  return {intr.fx * point.x() / point.z() + intr.cx, intr.fy * point.y() / point.z() + intr.cy};
}

inline Vec3 backproject(const Eigen::Vector2d& pixel, double depth, const CameraIntrinsics& intr) {
  MDK_CHECK(depth > 0.0, ErrorCode::kNonPositiveDepth, "depth must be positive");
  return {(pixel.x() - intr.cx) * depth / intr.fx, (pixel.y() - intr.cy) * depth / intr.fy, depth};
}

namespace detail {

inline int trailing_zero_bits(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  const std::uint64_t mantissa = bits & ((std::uint64_t{1} << 52) - 1);
  return mantissa == 0 ? 52 : std::countr_zero(mantissa);
}

// Inverse of v -> fl(v * omega). Among the doubles within two ulps of the
// quotient that map forward onto `scaled`, returns the one with the shortest
// significand. Values that originated from float32 or fixed-point codecs are
// recovered bit for bit; other inputs still satisfy fl(result * omega) == scaled
// whenever such a preimage exists nearby.
inline double unscale(double scaled, double omega) {
  const double q = scaled / omega;
  if (!std::isfinite(q) || q == 0.0) return q;
  double best = q;
  int best_tz = -1;
  double lo = q;
  double hi = q;
  for (int k = 0; k < 2; ++k) {
    lo = std::nextafter(lo, -std::numeric_limits<double>::infinity());
    hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
  }
  for (double c = lo; c <= hi; c = std::nextafter(c, std::numeric_limits<double>::infinity())) {
    if (c * omega != scaled) continue;
    const int tz = trailing_zero_bits(c);
    if (tz > best_tz || (tz == best_tz && std::abs(c - q) < std::abs(best - q))) {
      best = c;
      best_tz = tz;
    }
  }
  return best;
}

inline void check_focal(double f_c) {
  MDK_CHECK(f_c > 0.0 && std::isfinite(f_c), ErrorCode::kInvalidArgument,
            "canonical focal must be positive");
}

}  // namespace detail

/// Label-mode transform: the image is kept and depth is scaled by
/// omega_d = f_c / f so the sample looks as if taken by the canonical camera.
inline CanonicalBundle canonicalize_label(const DepthMap& depth, const ImageBuffer& image,
                                          const CameraIntrinsics& intr,
                                          double f_c = kDefaultCanonicalFocal) {
  intr.validate();
  detail::check_focal(f_c);
  const double f = intr.focal();
  const double omega = f_c / f;

  CanonicalBundle b;
  b.mode = CanonicalMode::kLabel;
  b.omega_d = omega;
  b.omega_r = 1.0;
  b.source_focal = f;
  b.original_intr = intr;
  b.original_width = depth.width();
  b.original_height = depth.height();
  b.depth_c = depth;
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    if (depth.valid[i]) b.depth_c.values[i] = depth.values[i] * omega;
  }
  b.image_c = image;
  b.intr_c = {f_c, f_c, intr.cx, intr.cy, intr.width, intr.height};
  return b;
}

/// Restores metric depth from label-mode canonical depth.
inline DepthMap decanonicalize_label(const DepthMap& depth_c, double omega_d) {
  MDK_CHECK(omega_d > 0.0 && std::isfinite(omega_d), ErrorCode::kInvalidArgument,
            "omega_d must be positive");
  DepthMap out = depth_c;
  if (omega_d == 1.0) return out;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.valid[i]) out.values[i] = detail::unscale(depth_c.values[i], omega_d);
  }
  return out;
}

/// Image-mode transform: image and depth are resized by omega_r = f_c / f,
/// depth values are left unscaled.
inline CanonicalBundle canonicalize_image(const DepthMap& depth, const ImageBuffer& image,
                                          const CameraIntrinsics& intr,
                                          double f_c = kDefaultCanonicalFocal) {
  intr.validate();
  detail::check_focal(f_c);
  const double f = intr.focal();
  const double omega = f_c / f;

  const int w = static_cast<int>(std::lround(omega * depth.width()));
  const int h = static_cast<int>(std::lround(omega * depth.height()));
  MDK_CHECK(w >= 1 && h >= 1, ErrorCode::kResizeDegenerate,
            "canonical image would be smaller than 1x1");

  CanonicalBundle b;
  b.mode = CanonicalMode::kImage;
  b.omega_d = 1.0;
  b.omega_r = omega;
  b.source_focal = f;
  b.original_intr = intr;
  b.original_width = depth.width();
  b.original_height = depth.height();
  b.intr_c = {f_c, f_c, omega * intr.cx, omega * intr.cy, w, h};
  if (w == depth.width() && h == depth.height()) {
    b.depth_c = depth;
    b.image_c = image;
    return b;
  }
  b.depth_c = DepthMap(resize_bilinear(depth.values, w, h, &depth.valid, 0.0),
                       resize_nearest(depth.valid, w, h));
  if (!image.pixels.empty()) {
    b.image_c.pixels = resize_bilinear(image.pixels, w, h, nullptr, Vec3::Zero().eval());
  }
  return b;
}

/// Resizes an image-mode canonical prediction back to the original grid.
inline DepthMap decanonicalize_image(const DepthMap& pred_c, const CanonicalBundle& bundle) {
  MDK_CHECK(pred_c.width() == bundle.intr_c.width && pred_c.height() == bundle.intr_c.height,
            ErrorCode::kSizeMismatch, "prediction size differs from the canonical size");
  const int w = bundle.original_width;
  const int h = bundle.original_height;
  if (pred_c.width() == w && pred_c.height() == h) return pred_c;
  return DepthMap(resize_bilinear(pred_c.values, w, h, &pred_c.valid, 0.0),
                  resize_nearest(pred_c.valid, w, h));
}

/// Undo whichever transform produced `bundle`.
inline DepthMap decanonicalize(const DepthMap& pred_c, const CanonicalBundle& bundle) {
  return bundle.mode == CanonicalMode::kLabel ? decanonicalize_label(pred_c, bundle.omega_d)
                                              : decanonicalize_image(pred_c, bundle);
}

/// Clamp valid depths into [lo, hi]. Never applied implicitly.
inline DepthMap clamp_depth(DepthMap depth, double lo, double hi) {
  MDK_CHECK(lo <= hi, ErrorCode::kInvalidArgument, "clamp range is empty");
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    if (depth.valid[i]) depth.values[i] = std::clamp(depth.values[i], lo, hi);
  }
  return depth;
}

}  // namespace mdk
