#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mdk/camera.hpp"
#include "mdk/geometry.hpp"
#include "mdk/io/file.hpp"

namespace mdk::io {

/// Raw PFM contents, rows top to bottom, channels interleaved.
struct PfmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;
};

namespace detail {

inline std::string next_token(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return std::string(bytes.substr(start, pos - start));
}

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace detail

/// Parses PFM bytes. A negative scale means little-endian samples. Rows in
/// the file run bottom to top.
inline PfmImage decode_pfm(std::string_view bytes) {
  std::size_t pos = 0;
  const std::string magic = detail::next_token(bytes, pos);
  PfmImage img;
  if (magic == "PF") {
    img.channels = 3;
  } else if (magic == "Pf") {
    img.channels = 1;
  } else {
    throw Error(ErrorCode::kMalformedHeader, "bad PFM magic '" + magic + "'");
  }
  double scale = 0.0;
  try {
    img.width = std::stoi(detail::next_token(bytes, pos));
    img.height = std::stoi(detail::next_token(bytes, pos));
    scale = std::stod(detail::next_token(bytes, pos));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kMalformedHeader, "unparsable PFM header");
  }
  MDK_CHECK(img.width > 0 && img.height > 0, ErrorCode::kMalformedHeader, "bad PFM dimensions");
  MDK_CHECK(scale != 0.0 && std::isfinite(scale), ErrorCode::kMalformedHeader, "bad PFM scale");
  MDK_CHECK(pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos])),
            ErrorCode::kTruncatedPayload, "PFM header not terminated");
  ++pos;  // single whitespace before the payload

  const bool file_little = scale < 0.0;
  const bool swap = file_little != (std::endian::native == std::endian::little);
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  MDK_CHECK(bytes.size() - pos >= count * 4, ErrorCode::kTruncatedPayload, "PFM payload truncated");
  img.data.resize(count);
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    const std::size_t src_row = static_cast<std::size_t>(img.height - 1 - y);
    for (std::size_t k = 0; k < row; ++k) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + pos + (src_row * row + k) * 4, 4);
      if (swap) bits = detail::byteswap32(bits);
      img.data[static_cast<std::size_t>(y) * row + k] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

/// Encodes little-endian PFM (scale -1).
inline std::string encode_pfm(const PfmImage& img) {
  MDK_CHECK(img.channels == 1 || img.channels == 3, ErrorCode::kInvalidArgument,
            "PFM supports 1 or 3 channels");
  std::string out = (img.channels == 3 ? "PF\n" : "Pf\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n-1.0\n";
  const std::size_t header = out.size();
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  out.resize(header + img.data.size() * 4);
  for (int y = 0; y < img.height; ++y) {
    const std::size_t dst_row = static_cast<std::size_t>(img.height - 1 - y);
    for (std::size_t k = 0; k < row; ++k) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(img.data[static_cast<std::size_t>(y) * row + k]);
      if constexpr (std::endian::native == std::endian::big) bits = detail::byteswap32(bits);
      std::memcpy(out.data() + header + (dst_row * row + k) * 4, &bits, 4);
    }
  }
  return out;
}

/// Non-finite samples become invalid pixels (value 0).
inline DepthMap depth_from_pfm(const PfmImage& img) {
  MDK_CHECK(img.channels == 1, ErrorCode::kUnsupportedFormat, "depth PFM must have one channel");
  DepthMap d(Grid<double>(img.width, img.height, 0.0), Mask(img.width, img.height, 0));
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (std::isfinite(img.data[i])) {
      d.values[i] = img.data[i];
      d.valid[i] = 1;
    }
  }
  return d;
}

/// Invalid pixels are written as NaN.
inline PfmImage depth_to_pfm(const DepthMap& d) {
  PfmImage img{d.width(), d.height(), 1, std::vector<float>(d.values.size())};
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    img.data[i] = d.valid[i] ? static_cast<float>(d.values[i]) : std::numeric_limits<float>::quiet_NaN();
  }
  return img;
}

/// Pixels with any non-finite component or zero length are invalid.
inline NormalMap normals_from_pfm(const PfmImage& img) {
  MDK_CHECK(img.channels == 3, ErrorCode::kUnsupportedFormat, "normal PFM must have three channels");
  NormalMap n(img.width, img.height);
  for (std::size_t i = 0; i < n.vectors.size(); ++i) {
    const Vec3 v(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
    if (!v.allFinite() || v.squaredNorm() == 0.0) continue;
    n.vectors[i] = v;
    n.valid[i] = 1;
  }
  return n;
}

inline PfmImage normals_to_pfm(const NormalMap& n) {
  PfmImage img{n.width(), n.height(), 3, std::vector<float>(n.vectors.size() * 3)};
  for (std::size_t i = 0; i < n.vectors.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      img.data[3 * i + c] = n.valid[i] ? static_cast<float>(n.vectors[i](c))
                                       : std::numeric_limits<float>::quiet_NaN();
    }
  }
  return img;
}

inline DepthMap read_depth_pfm(const std::filesystem::path& path) {
  return depth_from_pfm(decode_pfm(read_file(path)));
}

inline void write_depth_pfm(const std::filesystem::path& path, const DepthMap& d) {
  write_file_atomic(path, encode_pfm(depth_to_pfm(d)));
}

inline NormalMap read_normal_pfm(const std::filesystem::path& path) {
  return normals_from_pfm(decode_pfm(read_file(path)));
}

inline void write_normal_pfm(const std::filesystem::path& path, const NormalMap& n) {
  write_file_atomic(path, encode_pfm(normals_to_pfm(n)));
}

}  // namespace mdk::io
