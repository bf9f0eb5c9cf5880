#pragma once

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdk/camera.hpp"
#include "mdk/eval.hpp"
#include "mdk/geometry.hpp"
#include "mdk/io/file.hpp"

namespace mdk::io {

using Json = nlohmann::json;

inline constexpr const char* kToolkitVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Intrinsics

struct IntrinsicsFile {
  CameraIntrinsics intr;
  std::optional<PhysicalCamera> physical;
};

/// {fx, fy, cx, cy, width, height, focal_um?, pixel_size_um?}. When fx/fy
/// are absent they are derived from focal_um / pixel_size_um.
inline IntrinsicsFile parse_intrinsics(const Json& j) {
  IntrinsicsFile f;
  try {
    if (j.contains("focal_um") && j.contains("pixel_size_um")) {
      f.physical = PhysicalCamera{j.at("focal_um").get<double>(), j.at("pixel_size_um").get<double>()};
      f.physical->validate();
    }
    if (j.contains("fx")) {
      f.intr.fx = j.at("fx").get<double>();
      f.intr.fy = j.contains("fy") ? j.at("fy").get<double>() : f.intr.fx;
    } else {
      MDK_CHECK(f.physical.has_value(), ErrorCode::kInvalidArgument,
                "intrinsics need fx/fy or focal_um and pixel_size_um");
      f.intr.fx = f.intr.fy = pixel_focal(*f.physical);
    }
    f.intr.cx = j.at("cx").get<double>();
    f.intr.cy = j.at("cy").get<double>();
    f.intr.width = j.at("width").get<int>();
    f.intr.height = j.at("height").get<int>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("intrinsics: ") + e.what());
  }
  f.intr.validate();
  return f;
}

inline Json intrinsics_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline IntrinsicsFile read_intrinsics(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  return parse_intrinsics(j);
}

inline void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  write_file_atomic(path, intrinsics_json(k).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Poses: one camera-to-world pose per line, 12 numbers, row-major [R | t].

inline constexpr double kPoseOrthoTol = 1e-6;

inline std::vector<Pose> parse_poses(std::string_view text) {
  std::vector<Pose> poses;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[12];
    for (double& x : v) ls >> x;
    MDK_CHECK(!ls.fail(), ErrorCode::kInvalidArgument,
              "pose line " + std::to_string(lineno) + " needs 12 numbers");
    std::string extra;
    MDK_CHECK(!(ls >> extra), ErrorCode::kInvalidArgument,
              "pose line " + std::to_string(lineno) + " has more than 12 numbers");
    Mat3 r;
    r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    try {
      poses.push_back(Pose::make(r, Vec3(v[3], v[7], v[11]), kPoseOrthoTol));
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidArgument, "pose line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return poses;
}

inline std::string format_poses(const std::vector<Pose>& poses) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& p : poses) {
    for (int r = 0; r < 3; ++r) {
      out << p.rotation(r, 0) << ' ' << p.rotation(r, 1) << ' ' << p.rotation(r, 2) << ' '
          << p.translation(r) << (r < 2 ? ' ' : '\n');
    }
  }
  return out.str();
}

inline std::vector<Pose> read_poses(const std::filesystem::path& path) { return parse_poses(read_file(path)); }

inline void write_poses(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  write_file_atomic(path, format_poses(poses));
}

// ---------------------------------------------------------------------------
// Canonical bundle sidecar (metadata only; arrays live in their own files).

inline Json bundle_json(const CanonicalBundle& b) {
  return {{"mode", b.mode == CanonicalMode::kLabel ? "label" : "image"},
          {"omega_d", b.omega_d},
          {"omega_r", b.omega_r},
          {"source_focal", b.source_focal},
          {"canonical_intrinsics", intrinsics_json(b.intr_c)},
          {"original_intrinsics", intrinsics_json(b.original_intr)},
          {"original_size", {b.original_width, b.original_height}}};
}

/// Restores everything but the arrays.
inline CanonicalBundle parse_bundle(const Json& j) {
  CanonicalBundle b;
  try {
    const auto mode = j.at("mode").get<std::string>();
    MDK_CHECK(mode == "label" || mode == "image", ErrorCode::kInvalidArgument, "bad bundle mode");
    b.mode = mode == "label" ? CanonicalMode::kLabel : CanonicalMode::kImage;
    b.omega_d = j.at("omega_d").get<double>();
    b.omega_r = j.at("omega_r").get<double>();
    b.source_focal = j.value("source_focal", 0.0);
    b.intr_c = parse_intrinsics(j.at("canonical_intrinsics")).intr;
    b.original_intr = parse_intrinsics(j.at("original_intrinsics")).intr;
    b.original_width = j.at("original_size").at(0).get<int>();
    b.original_height = j.at("original_size").at(1).get<int>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bundle sidecar: ") + e.what());
  }
  return b;
}

inline CanonicalBundle read_bundle(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  return parse_bundle(j);
}

// ---------------------------------------------------------------------------
// Report blocks

inline Json to_json(const DepthMetrics& m) {
  return {{"absrel", m.absrel}, {"log10", m.log10},   {"rms", m.rms},       {"rms_log", m.rms_log},
          {"delta1", m.delta1}, {"delta2", m.delta2}, {"delta3", m.delta3}, {"pixels", m.pixels}};
}

inline Json to_json(const NormalMetrics& m) {
  return {{"mean_deg", m.mean_deg},   {"median_deg", m.median_deg}, {"rms_deg", m.rms_deg},
          {"acc_11_25", m.acc_11_25}, {"acc_22_5", m.acc_22_5},     {"acc_30", m.acc_30},
          {"pixels", m.pixels}};
}

inline Json to_json(const ReconMetrics& m) {
  return {{"chamfer_l1", m.chamfer_l1}, {"fscore", m.fscore},     {"precision", m.precision},
          {"recall", m.recall},         {"accuracy", m.accuracy}, {"completeness", m.completeness}};
}

inline Json to_json(const Protocol& p) {
  return {{"pooling", p.pooling == Pooling::kPixelPooled ? "pixel-pooled" : "sample-mean"},
          {"exclude_invalid", p.exclude_invalid}};
}

inline Json to_json(const Pose& p) {
  Json r = Json::array();
  for (int i = 0; i < 3; ++i) r.push_back({p.rotation(i, 0), p.rotation(i, 1), p.rotation(i, 2)});
  return {{"rotation", r}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

/// Skeleton of an evaluation report. Doubles are serialized with 17
/// significant digits, so reports round-trip exactly.
inline Json make_report(const std::string& command) {
  return {{"toolkit", "mdk"}, {"version", kToolkitVersion}, {"command", command}, {"files", Json::array()}};
}

}  // namespace mdk::io
