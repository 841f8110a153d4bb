#include "bevrec/geometry.hpp"

#include <cmath>

namespace bevrec::geometry {

DepthMap disparity_to_depth(const DisparityMap& disparity, const StereoRig& rig) {
  rig.validate();
  DepthMap depth(disparity.height, disparity.width);
  const double numerator = rig.intrinsics.f_u * rig.baseline;
  for (std::size_t i = 0; i < disparity.values.size(); ++i) {
    const double d = disparity.values[i];
    if (!disparity.valid[i] || !(d > 0.0) || !std::isfinite(d)) continue;
    const double z = numerator / d;
    if (!std::isfinite(z)) continue;
    depth.values[i] = z;
    depth.valid[i] = 1;
  }
  return depth;
}

PointCloud backproject(const DepthMap& depth, const CameraIntrinsics& intrinsics, const Extrinsics& extrinsics,
                       double max_depth) {
  intrinsics.validate();
  extrinsics.validate();
  const Mat3 r_inv = extrinsics.rotation.transpose();
  PointCloud cloud;
  cloud.points.reserve(depth.valid_count());
  for (std::size_t v = 0; v < depth.height; ++v) {
    for (std::size_t u = 0; u < depth.width; ++u) {
      if (!depth.is_valid(v, u)) continue;
      const double z = depth.at(v, u);
      if (!(z > 0.0) || !std::isfinite(z) || z > max_depth) continue;
      const Vec3 cam(z * (static_cast<double>(u) - intrinsics.c_u) / intrinsics.f_u,
                     z * (static_cast<double>(v) - intrinsics.c_v) / intrinsics.f_v, z);
      cloud.points.push_back(r_inv * (cam - extrinsics.translation));
    }
  }
  return cloud;
}

Vec3 project(const Vec3& camera_point, const CameraIntrinsics& intrinsics) {
  const double z = camera_point.z();
  return {intrinsics.f_u * camera_point.x() / z + intrinsics.c_u, intrinsics.f_v * camera_point.y() / z + intrinsics.c_v,
          z};
}

Vec3 vehicle_to_camera(const Vec3& vehicle_point, const Extrinsics& extrinsics) {
  return extrinsics.rotation * vehicle_point + extrinsics.translation;
}

PointCloud transform(const PointCloud& cloud, const Mat3& rotation, const Vec3& translation) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(rotation * p + translation);
  return out;
}

}  // namespace bevrec::geometry
