#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace bevrec {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using FrameId = std::uint64_t;

/// Unordered 3-D points in meters. Consumers treat it as a set; order is only
/// kept so that results are reproducible.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Rigid pose in the map frame. `rotation` maps body axes into map axes.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  /// Builds a pose from a row-major 3x4 [R|t] block (12 values).
  static Pose from_row_major(const double* values);
  void to_row_major(double* values) const;
};

/// True when `m` is orthonormal within `tol` (max abs entry of m^T m - I).
bool is_orthonormal(const Mat3& m, double tol = 1e-9);

struct CameraIntrinsics {
  double f_u = 0.0;
  double f_v = 0.0;
  double c_u = 0.0;
  double c_v = 0.0;

  /// Throws ConfigError if the focal lengths are not positive or the
  /// principal point is not finite.
  void validate() const;
};

struct StereoRig {
  CameraIntrinsics intrinsics;
  double baseline = 0.0;  // meters

  void validate() const;
};

/// Vehicle-to-camera transform: p_cam = rotation * p_vehicle + translation.
struct Extrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;

  /// Camera (x right, y down, z forward) looking along the vehicle's forward
  /// axis (vehicle: x right, y forward, z up), both origins coincident.
  static Extrinsics forward_camera();
};

/// Dense per-pixel scalar map with an explicit validity mask. The tag keeps
/// depth and disparity maps from being mixed up.
template <class Tag>
struct PixelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  PixelMap() = default;
  PixelMap(std::size_t h, std::size_t w)
      : height(h), width(w), values(h * w, 0.0), valid(h * w, 0) {}

  std::size_t index(std::size_t row, std::size_t col) const { return row * width + col; }
  double at(std::size_t row, std::size_t col) const { return values[index(row, col)]; }
  bool is_valid(std::size_t row, std::size_t col) const { return valid[index(row, col)] != 0; }

  void set(std::size_t row, std::size_t col, double value) {
    values[index(row, col)] = value;
    valid[index(row, col)] = 1;
  }
  void invalidate(std::size_t row, std::size_t col) {
    values[index(row, col)] = 0.0;
    valid[index(row, col)] = 0;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

struct DepthTag {};
struct DisparityTag {};

/// Per-pixel depth in meters.
using DepthMap = PixelMap<DepthTag>;
/// Per-pixel disparity in pixels.
using DisparityMap = PixelMap<DisparityTag>;

}  // namespace bevrec
