#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "mdk/camera.hpp"
#include "mdk/io/file.hpp"
#include "mdk/io/pfm.hpp"
#include "mdk/io/png.hpp"

namespace mdk::io {

/// Binary PPM (P6), maxval up to 65535.
inline ImageBuffer decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (true) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  MDK_CHECK(token() == "P6", ErrorCode::kMalformedHeader, "only binary PPM (P6) is supported");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::kMalformedHeader, "unparsable PPM header");
  }
  MDK_CHECK(w > 0 && h > 0 && maxval > 0 && maxval <= 65535, ErrorCode::kMalformedHeader,
            "bad PPM header values");
  ++pos;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  MDK_CHECK(bytes.size() >= pos && bytes.size() - pos >= n * bps, ErrorCode::kTruncatedPayload,
            "PPM payload truncated");
  ImageBuffer img = ImageBuffer::filled(w, h, 0.0);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = bps == 2 ? (p[2 * i] << 8 | p[2 * i + 1]) : p[i];
    img.pixels[i / 3](static_cast<int>(i % 3)) = v / maxval;
  }
  return img;
}

/// 8-bit P6.
inline std::string encode_ppm(const ImageBuffer& img) {
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  for (const auto& px : img.pixels) {
    for (int c = 0; c < 3; ++c) {
      out.push_back(static_cast<char>(std::lround(std::clamp(px(c), 0.0, 1.0) * 255.0)));
    }
  }
  return out;
}

inline ImageBuffer decode_png_rgb(std::string_view bytes) {
  const auto raw = detail::decode_png(bytes, true);
  ImageBuffer img = ImageBuffer::filled(raw.width, raw.height, 0.0);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    img.pixels[i / 3](static_cast<int>(i % 3)) = raw.samples[i] / 255.0;
  }
  return img;
}

/// Dispatches on the file signature: PNG or PPM.
inline ImageBuffer read_image(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes.substr(1, 3) == "PNG") {
    return decode_png_rgb(bytes);
  }
  return decode_ppm(bytes);
}

inline void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  write_file_atomic(path, encode_ppm(img));
}

/// Depth from .pfm or 16-bit .png, chosen by extension.
inline DepthMap read_depth(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png16_depth(path);
  return read_depth_pfm(path);
}

inline void write_depth(const std::filesystem::path& path, const DepthMap& d) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") {
    write_png16_depth(path, d);
  } else {
    write_depth_pfm(path, d);
  }
}

}  // namespace mdk::io
