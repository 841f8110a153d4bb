#pragma once

#include <limits>

#include "bevrec/types.hpp"

namespace bevrec::geometry {

/// depth = f_u * baseline / D for every valid pixel with D > 0; all other
/// pixels come out invalid. Output has the input's dimensions.
DepthMap disparity_to_depth(const DisparityMap& disparity, const StereoRig& rig);

/// Lifts every valid pixel with depth <= `max_depth` to a vehicle-frame point.
///
/// The pinhole inverse is applied in homogeneous form,
///   p_cam = (depth (u - c_u) / f_u, depth (v - c_v) / f_v, depth),
/// and the result is mapped back through the extrinsics,
///   p_vehicle = R^T (p_cam - t).
/// Pixels are visited in row-major order; u is the column, v the row.
PointCloud backproject(const DepthMap& depth, const CameraIntrinsics& intrinsics, const Extrinsics& extrinsics,
                       double max_depth = std::numeric_limits<double>::infinity());

/// Forward pinhole model: camera-frame point -> (u, v, depth).
Vec3 project(const Vec3& camera_point, const CameraIntrinsics& intrinsics);

/// p_vehicle -> p_cam = R p + t.
Vec3 vehicle_to_camera(const Vec3& vehicle_point, const Extrinsics& extrinsics);

/// p -> rotation * p + translation for every point.
PointCloud transform(const PointCloud& cloud, const Mat3& rotation, const Vec3& translation);

}  // namespace bevrec::geometry
