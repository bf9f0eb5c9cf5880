#pragma once

#include <algorithm>
#include <cmath>

#include "mdk/grid.hpp"

namespace mdk {

namespace detail {

// Pixel-center convention: destination pixel x covers source coordinate
// (x + 0.5) * src / dst - 0.5.
struct Tap {
  int i0, i1;
  double w1;
};

inline Tap bilinear_tap(int dst_index, int src_size, int dst_size) {
  const double scale = static_cast<double>(src_size) / static_cast<double>(dst_size);
  double s = (dst_index + 0.5) * scale - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
  const int i0 = static_cast<int>(std::floor(s));
  const int i1 = std::min(i0 + 1, src_size - 1);
  return {i0, i1, s - i0};
}

inline int nearest_index(int dst_index, int src_size, int dst_size) {
  const double scale = static_cast<double>(src_size) / static_cast<double>(dst_size);
  const int i = static_cast<int>(std::floor((dst_index + 0.5) * scale));
  return std::clamp(i, 0, src_size - 1);
}

}  // namespace detail

/// Bilinear resampling. When `valid` is given, only valid source pixels
/// contribute and their weights are renormalized; destinations with no
/// contributing source get `T{}`-like zero via `zero`.
template <typename T>
Grid<T> resize_bilinear(const Grid<T>& src, int width, int height, const Mask* valid = nullptr,
                        const T& zero = T{}) {
  MDK_CHECK(width >= 1 && height >= 1, ErrorCode::kResizeDegenerate,
            "target size must be at least 1x1");
  MDK_CHECK(!src.empty(), ErrorCode::kResizeDegenerate, "source grid is empty");
  if (valid) {
    MDK_CHECK(valid->same_shape(src), ErrorCode::kShapeMismatch, "mask shape differs from grid");
  }
  Grid<T> out(width, height, zero);
  for (int y = 0; y < height; ++y) {
    const auto ty = detail::bilinear_tap(y, src.height(), height);
    for (int x = 0; x < width; ++x) {
      const auto tx = detail::bilinear_tap(x, src.width(), width);
      const int xs[2] = {tx.i0, tx.i1};
      const int ys[2] = {ty.i0, ty.i1};
      const double wx[2] = {1.0 - tx.w1, tx.w1};
      const double wy[2] = {1.0 - ty.w1, ty.w1};
      T acc = zero;
      double wsum = 0.0;
      for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 2; ++i) {
          const double w = wx[i] * wy[j];
          if (w == 0.0) continue;
          if (valid && !(*valid)(xs[i], ys[j])) continue;
          acc = acc + src(xs[i], ys[j]) * w;
          wsum += w;
        }
      }
      if (wsum > 0.0) {
        // Skip the division when nothing was dropped so constant fields stay exact.
        out(x, y) = (wsum == 1.0) ? acc : acc * (1.0 / wsum);
      }
    }
  }
  return out;
}

template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, int width, int height) {
  MDK_CHECK(width >= 1 && height >= 1, ErrorCode::kResizeDegenerate,
            "target size must be at least 1x1");
  MDK_CHECK(!src.empty(), ErrorCode::kResizeDegenerate, "source grid is empty");
  Grid<T> out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = detail::nearest_index(y, src.height(), height);
    for (int x = 0; x < width; ++x) {
      out(x, y) = src(detail::nearest_index(x, src.width(), width), sy);
    }
  }
  return out;
}

}  // namespace mdk
