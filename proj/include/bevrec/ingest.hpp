#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bevrec/types.hpp"

namespace bevrec::ingest {

using Projection = Eigen::Matrix<double, 3, 4>;

/// Reads a Velodyne scan stored as packed little-endian float32 records
/// (x, y, z, intensity). Intensity is dropped; coordinates are returned as
/// stored, without any frame change.
PointCloud read_lidar_scan(const std::filesystem::path& path);

/// Writes `cloud` in the same 16-byte record layout. `intensity` fills the
/// fourth channel.
void write_lidar_scan(const std::filesystem::path& path, const PointCloud& cloud, float intensity = 0.0f);

/// Parses a poses file: one row-major 3x4 [R|t] per non-empty line.
///
/// Rotation blocks printed with limited precision are snapped to the nearest
/// rotation when they are within 1e-3 of orthonormal; anything further off is
/// a FormatError.
std::vector<Pose> read_poses(const std::filesystem::path& path);

void write_poses(const std::filesystem::path& path, std::span<const Pose> poses);

/// "NAME: v0 ... v11" calibration lines keyed by NAME.
struct Calibration {
  std::map<std::string, Projection> entries;

  bool has(const std::string& name) const { return entries.count(name) != 0; }
  /// Throws FormatError if `name` is missing.
  const Projection& at(const std::string& name) const;
};

Calibration read_calibration(const std::filesystem::path& path);

/// f_u = P(0,0), f_v = P(1,1), c_u = P(0,2), c_v = P(1,2).
CameraIntrinsics intrinsics_from_projection(const Projection& p);

/// Baseline is (left(0,3) - right(0,3)) / right(0,0); with a reference left
/// camera (zero offset) this is -right(0,3)/right(0,0).
StereoRig stereo_rig_from_projections(const Projection& left, const Projection& right);

/// Raw 16-bit single-channel image.
struct Gray16 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> pixels;
};

/// Throws FormatError unless the file is a 16-bit grayscale PNG.
Gray16 read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Gray16& image);

/// depth = raw * scale meters; raw 0 is an invalid pixel.
DepthMap read_depth_png(const std::filesystem::path& path, double scale);

/// disparity = raw * scale pixels; raw 0 is an invalid pixel.
DisparityMap read_disparity(const std::filesystem::path& path, double scale);

/// Sorted list of files in `dir` with extension `ext` (e.g. ".bin").
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& ext);

}  // namespace bevrec::ingest
