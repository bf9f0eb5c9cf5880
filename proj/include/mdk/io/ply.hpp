#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdk/geometry.hpp"
#include "mdk/io/file.hpp"

namespace mdk::io {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

struct PlyReadResult {
  PointCloud cloud;
  /// One entry per vertex property that was skipped.
  std::vector<std::string> warnings;
};

namespace detail {

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

inline PlyType ply_type(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::kInt8;
  if (name == "uchar" || name == "uint8") return PlyType::kUint8;
  if (name == "short" || name == "int16") return PlyType::kInt16;
  if (name == "ushort" || name == "uint16") return PlyType::kUint16;
  if (name == "int" || name == "int32") return PlyType::kInt32;
  if (name == "uint" || name == "uint32") return PlyType::kUint32;
  if (name == "float" || name == "float32") return PlyType::kFloat32;
  if (name == "double" || name == "float64") return PlyType::kFloat64;
  throw Error(ErrorCode::kMalformedHeader, "unknown PLY type '" + name + "'");
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUint8: return 1;
    case PlyType::kInt16:
    case PlyType::kUint16: return 2;
    case PlyType::kInt32:
    case PlyType::kUint32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
  PlyType count_type = PlyType::kUint8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Little-endian binary value as double.
inline double read_binary(const char* p, PlyType t) {
  auto load = [p](auto v) {
    std::memcpy(&v, p, sizeof(v));
    return v;
  };
  static_assert(std::endian::native == std::endian::little, "binary PLY assumes a little-endian host");
  switch (t) {
    case PlyType::kInt8: return load(std::int8_t{});
    case PlyType::kUint8: return load(std::uint8_t{});
    case PlyType::kInt16: return load(std::int16_t{});
    case PlyType::kUint16: return load(std::uint16_t{});
    case PlyType::kInt32: return load(std::int32_t{});
    case PlyType::kUint32: return load(std::uint32_t{});
    case PlyType::kFloat32: return load(float{});
    case PlyType::kFloat64: return load(double{});
  }
  return 0.0;
}

// Roles of the vertex properties the cloud understands.
enum class Role { kSkip, kX, kY, kZ, kNx, kNy, kNz, kR, kG, kB };

inline Role role_of(const std::string& name) {
  if (name == "x") return Role::kX;
  if (name == "y") return Role::kY;
  if (name == "z") return Role::kZ;
  if (name == "nx") return Role::kNx;
  if (name == "ny") return Role::kNy;
  if (name == "nz") return Role::kNz;
  if (name == "red") return Role::kR;
  if (name == "green") return Role::kG;
  if (name == "blue") return Role::kB;
  return Role::kSkip;
}

}  // namespace detail

/// Reads ASCII or binary little-endian PLY. Only the "vertex" element is
/// kept; x, y, z are required, nx/ny/nz and red/green/blue are optional and
/// any other vertex property is skipped with a warning.
inline PlyReadResult decode_ply(std::string_view bytes) {
  using namespace detail;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= bytes.size()) return std::nullopt;
    std::size_t end = bytes.find('\n', pos);
    if (end == std::string_view::npos) end = bytes.size();
    std::string line(bytes.substr(pos, end - pos));
    pos = std::min(end + 1, bytes.size());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  auto first = next_line();
  MDK_CHECK(first && *first == "ply", ErrorCode::kMalformedHeader, "missing 'ply' magic");
  std::optional<PlyFormat> format;
  std::vector<PlyElement> elements;
  bool ended = false;
  while (auto line = next_line()) {
    std::istringstream ls(*line);
    std::string kw;
    ls >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "end_header") {
      ended = true;
      break;
    }
    if (kw == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") {
        format = PlyFormat::kAscii;
      } else if (f == "binary_little_endian") {
        format = PlyFormat::kBinaryLittleEndian;
      } else {
        throw Error(ErrorCode::kUnsupportedFormat, "PLY format '" + f + "' is not supported");
      }
    } else if (kw == "element") {
      PlyElement e;
      long long n = -1;
      ls >> e.name >> n;
      MDK_CHECK(!ls.fail() && n >= 0, ErrorCode::kMalformedHeader, "bad element line");
      e.count = static_cast<std::size_t>(n);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      MDK_CHECK(!elements.empty(), ErrorCode::kMalformedHeader, "property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = ply_type(ct);
        p.type = ply_type(it);
      } else {
        p.type = ply_type(t);
        ls >> p.name;
      }
      MDK_CHECK(!p.name.empty(), ErrorCode::kMalformedHeader, "property without a name");
      elements.back().properties.push_back(p);
    } else {
      throw Error(ErrorCode::kMalformedHeader, "unexpected header keyword '" + kw + "'");
    }
  }
  MDK_CHECK(ended, ErrorCode::kMalformedHeader, "missing end_header");
  MDK_CHECK(format.has_value(), ErrorCode::kMalformedHeader, "missing format line");

  PlyReadResult res;
  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    std::vector<Role> roles;
    bool seen[10] = {};
    for (const auto& p : e.properties) {
      Role r = is_vertex && !p.is_list ? role_of(p.name) : Role::kSkip;
      if (r != Role::kSkip && seen[static_cast<int>(r)]) r = Role::kSkip;
      seen[static_cast<int>(r)] = true;
      if (is_vertex && r == Role::kSkip) res.warnings.push_back("ignored vertex property '" + p.name + "'");
      roles.push_back(r);
    }
    if (is_vertex) {
      MDK_CHECK(seen[static_cast<int>(Role::kX)] && seen[static_cast<int>(Role::kY)] &&
                    seen[static_cast<int>(Role::kZ)],
                ErrorCode::kMalformedHeader, "vertex element lacks x, y or z");
    }
    const bool has_n = seen[static_cast<int>(Role::kNx)] && seen[static_cast<int>(Role::kNy)] &&
                       seen[static_cast<int>(Role::kNz)];
    const bool has_c = seen[static_cast<int>(Role::kR)] && seen[static_cast<int>(Role::kG)] &&
                       seen[static_cast<int>(Role::kB)];
    if (is_vertex) {
      res.cloud.points.reserve(e.count);
      if (has_n) res.cloud.normals.reserve(e.count);
      if (has_c) res.cloud.colors.reserve(e.count);
    }

    for (std::size_t v = 0; v < e.count; ++v) {
      double vals[10] = {};
      if (*format == PlyFormat::kAscii) {
        auto line = next_line();
        MDK_CHECK(line.has_value(), ErrorCode::kTruncatedPayload, "PLY body truncated");
        std::istringstream ls(*line);
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.is_list) {
            long long n = 0;
            ls >> n;
            for (long long j = 0; j < n; ++j) {
              double dummy;
              ls >> dummy;
            }
            continue;
          }
          double x = 0.0;
          ls >> x;
          if (p.type == PlyType::kFloat32) x = static_cast<float>(x);
          vals[static_cast<int>(roles[k])] = x;
        }
        MDK_CHECK(!ls.fail(), ErrorCode::kTruncatedPayload, "malformed PLY ascii row");
      } else {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.is_list) {
            const std::size_t cs = ply_size(p.count_type);
            MDK_CHECK(bytes.size() - pos >= cs, ErrorCode::kTruncatedPayload, "PLY body truncated");
            const auto n = static_cast<std::size_t>(read_binary(bytes.data() + pos, p.count_type));
            pos += cs;
            const std::size_t skip = n * ply_size(p.type);
            MDK_CHECK(bytes.size() - pos >= skip, ErrorCode::kTruncatedPayload, "PLY body truncated");
            pos += skip;
            continue;
          }
          const std::size_t s = ply_size(p.type);
          MDK_CHECK(bytes.size() - pos >= s, ErrorCode::kTruncatedPayload, "PLY body truncated");
          vals[static_cast<int>(roles[k])] = read_binary(bytes.data() + pos, p.type);
          pos += s;
        }
      }
      if (!is_vertex) continue;
      res.cloud.points.emplace_back(vals[static_cast<int>(Role::kX)], vals[static_cast<int>(Role::kY)],
                                    vals[static_cast<int>(Role::kZ)]);
      if (has_n) {
        res.cloud.normals.emplace_back(vals[static_cast<int>(Role::kNx)],
                                       vals[static_cast<int>(Role::kNy)],
                                       vals[static_cast<int>(Role::kNz)]);
      }
      if (has_c) {
        res.cloud.colors.push_back({static_cast<std::uint8_t>(vals[static_cast<int>(Role::kR)]),
                                    static_cast<std::uint8_t>(vals[static_cast<int>(Role::kG)]),
                                    static_cast<std::uint8_t>(vals[static_cast<int>(Role::kB)])});
      }
    }
  }
  return res;
}

/// Coordinates and normals are written as float32.
inline std::string encode_ply(const PointCloud& cloud, PlyFormat format) {
  const bool has_n = cloud.has_normals();
  const bool has_c = cloud.has_colors();
  MDK_CHECK(!has_n || cloud.normals.size() == cloud.size(), ErrorCode::kInvalidArgument,
            "normal count differs from point count");
  MDK_CHECK(!has_c || cloud.colors.size() == cloud.size(), ErrorCode::kInvalidArgument,
            "color count differs from point count");
  std::string out = "ply\nformat ";
  out += format == PlyFormat::kAscii ? "ascii" : "binary_little_endian";
  out += " 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (has_n) out += "property float nx\nproperty float ny\nproperty float nz\n";
  if (has_c) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";

  auto put_float = [&](double v) {
    const float f = static_cast<float>(v);
    if (format == PlyFormat::kAscii) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(f));
      out += buf;
    } else {
      char raw[4];
      std::memcpy(raw, &f, 4);
      out.append(raw, 4);
    }
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::vector<double> fl = {cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()};
    if (has_n) fl.insert(fl.end(), {cloud.normals[i].x(), cloud.normals[i].y(), cloud.normals[i].z()});
    for (std::size_t k = 0; k < fl.size(); ++k) {
      if (format == PlyFormat::kAscii && k > 0) out += ' ';
      put_float(fl[k]);
    }
    if (has_c) {
      for (int c = 0; c < 3; ++c) {
        if (format == PlyFormat::kAscii) {
          out += ' ' + std::to_string(cloud.colors[i][c]);
        } else {
          out.push_back(static_cast<char>(cloud.colors[i][c]));
        }
      }
    }
    if (format == PlyFormat::kAscii) out += '\n';
  }
  return out;
}

inline PlyReadResult read_ply(const std::filesystem::path& path) { return decode_ply(read_file(path)); }

inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
                      PlyFormat format = PlyFormat::kBinaryLittleEndian) {
  write_file_atomic(path, encode_ply(cloud, format));
}

}  // namespace mdk::io
