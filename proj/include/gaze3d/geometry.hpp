#pragma once

#include <Eigen/Dense>
#include <array>

#include "gaze3d/errors.hpp"

namespace gaze3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid 6DOF transform mapping camera coordinates to world coordinates:
/// p_world = R * p_cam + t. The camera looks along +z, x right, y down.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 to_world(const Vec3& p_cam) const { return R * p_cam + t; }
  Vec3 to_camera(const Vec3& p_world) const { return R.transpose() * (p_world - t); }
};

Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);

/// True iff R is orthonormal with determinant +1 within tol.
bool is_rotation(const Mat3& R, double tol = 1e-9);

Mat3 skew(const Vec3& v);

/// Rodrigues exponential. Falls back to the first-order series below 1e-8.
Mat3 rotation_exp(const Vec3& axis_angle);

/// Inverse of rotation_exp; handles both the small-angle and the near-pi branch.
Vec3 rotation_log(const Mat3& R);

/// Rotation angle in radians, in [0, pi].
double rotation_angle(const Mat3& R);

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  /// Continuous pixel coordinates; bounds are inclusive so image corners are valid.
  bool contains(const Vec2& px) const {
    return px.x() >= 0.0 && px.x() <= width && px.y() >= 0.0 && px.y() <= height;
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
};

struct Frustum {
  Vec3 apex;
  std::array<Vec3, 4> corner_dirs;  // unit, through corners (0,0),(w,0),(w,h),(0,h)
  double near_m = 0, far_m = 0;
};

/// Pinhole projection of a world point. Throws BehindCamera when the camera-frame
/// depth is <= 1e-9. The result may lie outside the image; callers filter.
Vec2 project(const CameraIntrinsics& intr, const Pose& pose, const Vec3& p_world);

/// Camera-frame point for a pixel at the given depth. Throws NonPositiveDepth.
Vec3 backproject(const CameraIntrinsics& intr, const Vec2& px, double depth);

/// World-space viewing ray through a pixel. Throws OutOfImage.
Ray pixel_to_ray(const CameraIntrinsics& intr, const Pose& pose, const Vec2& px);

/// Angle between two directions in degrees, in [0, 180]. Throws ZeroDirection.
double angular_error_deg(const Vec3& a, const Vec3& b);
inline double angular_error_deg(const Ray& a, const Ray& b) {
  return angular_error_deg(a.direction, b.direction);
}

Frustum make_frustum(const Pose& pose, const CameraIntrinsics& intr, double near_m, double far_m);

/// Pose serialization order used by every file format: qw,qx,qy,qz,tx,ty,tz.
/// The quaternion sign is canonicalized (first nonzero of qw,qx,qy,qz positive).
std::array<double, 7> pose_to_array(const Pose& p);
Pose pose_from_array(const std::array<double, 7>& a);

}  // namespace gaze3d
