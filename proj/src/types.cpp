#include "bevrec/types.hpp"

#include <cmath>

#include "bevrec/errors.hpp"

namespace bevrec {

Pose Pose::from_row_major(const double* values) {
  Pose pose;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = values[r * 4 + c];
    pose.position(r) = values[r * 4 + 3];
  }
  return pose;
}

void Pose::to_row_major(double* values) const {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) values[r * 4 + c] = rotation(r, c);
    values[r * 4 + 3] = position(r);
  }
}

bool is_orthonormal(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  return ((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff()) <= tol;
}

void CameraIntrinsics::validate() const {
  if (!(f_u > 0.0) || !std::isfinite(f_u)) throw ConfigError("intrinsics: f_u must be positive");
  if (!(f_v > 0.0) || !std::isfinite(f_v)) throw ConfigError("intrinsics: f_v must be positive");
  if (!std::isfinite(c_u) || !std::isfinite(c_v)) throw ConfigError("intrinsics: principal point must be finite");
}

void StereoRig::validate() const {
  intrinsics.validate();
  if (!(baseline > 0.0) || !std::isfinite(baseline)) throw ConfigError("stereo rig: baseline must be positive");
}

void Extrinsics::validate() const {
  if (!is_orthonormal(rotation) || std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw ConfigError("extrinsics: rotation must be orthonormal with determinant 1");
  if (!translation.allFinite()) throw ConfigError("extrinsics: translation must be finite");
}

Extrinsics Extrinsics::forward_camera() {
  Extrinsics e;
  // cam_x = veh_x, cam_y = -veh_z, cam_z = veh_y
  e.rotation << 1, 0, 0,
                0, 0, -1,
                0, 1, 0;
  return e;
}

}  // namespace bevrec
