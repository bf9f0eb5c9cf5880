#pragma once

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <png.h>

#include "mdk/camera.hpp"
#include "mdk/io/file.hpp"

namespace mdk::io {

/// Stored units per meter for 16-bit depth PNGs; 0 marks an invalid pixel.
inline constexpr double kPng16DepthScale = 256.0;

namespace detail {

struct PngReadCursor {
  std::string_view bytes;
  std::size_t pos = 0;
};

inline void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->bytes.size() - cur->pos < n) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->bytes.data() + cur->pos, n);
  cur->pos += n;
}

inline void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

inline void png_flush_cb(png_structp) {}

inline void png_warn_cb(png_structp, png_const_charp) {}

/// Decoded samples, 8- or 16-bit per channel.
struct RawPng {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<std::uint16_t> samples;
};

// `expand_to_rgb8` converts anything (palette, gray, alpha, 16-bit) into 8-bit RGB.
inline RawPng decode_png(std::string_view bytes, bool expand_to_rgb8) {
  MDK_CHECK(bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0,
            ErrorCode::kMalformedHeader, "not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_warn_cb);
  MDK_CHECK(png != nullptr, ErrorCode::kIoFailure, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::kIoFailure, "png_create_info_struct failed");
  }
  PngReadCursor cursor{bytes, 0};
  RawPng raw;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kTruncatedPayload, "corrupt or truncated PNG");
  }
  png_set_read_fn(png, &cursor, png_read_cb);
  png_read_info(png, info);
  if (expand_to_rgb8) {
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
  }
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.bit_depth = png_get_bit_depth(png, info);
  raw.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(raw.height));
  rows.resize(static_cast<std::size_t>(raw.height));
  for (int y = 0; y < raw.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
  raw.samples.resize(n);
  if (raw.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      raw.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
  } else if (raw.bit_depth == 8) {
    for (std::size_t i = 0; i < n; ++i) raw.samples[i] = buffer[i];
  }
  return raw;
}

}  // namespace detail

/// Depth from a 16-bit single-channel PNG: meters = stored / 256.
inline DepthMap decode_png16_depth(std::string_view bytes) {
  const auto raw = detail::decode_png(bytes, false);
  MDK_CHECK(raw.bit_depth == 16, ErrorCode::kUnsupportedBitDepth,
            "depth PNG must be 16-bit, got " + std::to_string(raw.bit_depth));
  MDK_CHECK(raw.channels == 1, ErrorCode::kUnsupportedFormat, "depth PNG must be single-channel");
  DepthMap d(Grid<double>(raw.width, raw.height, 0.0), Mask(raw.width, raw.height, 0));
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    if (raw.samples[i] == 0) continue;
    d.values[i] = raw.samples[i] / kPng16DepthScale;
    d.valid[i] = 1;
  }
  return d;
}

/// Quantizes with round-half-up to 1/256 m. Invalid pixels, and valid ones
/// that quantize to 0, are stored as 0; values above the range saturate.
inline std::string encode_png16_depth(const DepthMap& d) {
  const int w = d.width();
  const int h = d.height();
  MDK_CHECK(w >= 1 && h >= 1, ErrorCode::kInvalidArgument, "empty depth map");
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(w) * h * 2, 0);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (!d.valid[i] || !std::isfinite(d.values[i])) continue;
    const double q = std::floor(d.values[i] * kPng16DepthScale + 0.5);
    const auto stored = static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
    buffer[2 * i] = static_cast<std::uint8_t>(stored >> 8);
    buffer[2 * i + 1] = static_cast<std::uint8_t>(stored & 0xff);
  }
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_warn_cb);
  MDK_CHECK(png != nullptr, ErrorCode::kIoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::kIoFailure, "png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(w) * 2 * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoFailure, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, detail::png_write_cb, detail::png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline DepthMap read_png16_depth(const std::filesystem::path& path) {
  return decode_png16_depth(read_file(path));
}

inline void write_png16_depth(const std::filesystem::path& path, const DepthMap& d) {
  write_file_atomic(path, encode_png16_depth(d));
}

}  // namespace mdk::io
