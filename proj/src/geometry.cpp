#include "gaze3d/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

namespace gaze3d {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::behind_camera: return "BehindCamera";
    case Errc::non_positive_depth: return "NonPositiveDepth";
    case Errc::out_of_image: return "OutOfImage";
    case Errc::zero_direction: return "ZeroDirection";
    case Errc::bad_range: return "BadRange";
    case Errc::insufficient_correspondences: return "InsufficientCorrespondences";
    case Errc::degenerate_configuration: return "DegenerateConfiguration";
    case Errc::diverged_behind_camera: return "DivergedBehindCamera";
    case Errc::all_behind_camera: return "AllBehindCamera";
    case Errc::no_consensus: return "NoConsensus";
    case Errc::empty_train_set: return "EmptyTrainSet";
    case Errc::too_few_descriptors: return "TooFewDescriptors";
    case Errc::empty_database: return "EmptyDatabase";
    case Errc::untrained_tree: return "UntrainedTree";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::too_few_keypoints: return "TooFewKeypoints";
    case Errc::too_few_matches: return "TooFewMatches";
    case Errc::insufficient_pairs: return "InsufficientPairs";
    case Errc::empty_session: return "EmptySession";
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::target_not_visible: return "TargetNotVisible";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::io_error: return "IoError";
    case Errc::bad_checksum: return "BadChecksum";
  }
  return "UnknownError";
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

Pose invert(const Pose& p) {
  Pose out;
  out.R = p.R.transpose();
  out.t = -(out.R * p.t);
  return out;
}

bool is_rotation(const Mat3& R, double tol) {
  const Mat3 err = R.transpose() * R - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
       -v.y(), v.x(), 0;
  return m;
}

Mat3 rotation_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = skew(w);
  if (theta < 1e-8) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * W + c * W * W;
}

double rotation_angle(const Mat3& R) {
  const double tr = R.trace();
  return std::acos(std::clamp((tr - 1.0) * 0.5, -1.0, 1.0));
}

Vec3 rotation_log(const Mat3& R) {
  const double theta = rotation_angle(R);
  Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (theta < 1e-8) {
    return 0.5 * w;
  }
  if (M_PI - theta < 1e-6) {
    // Near pi the vee vector vanishes; recover the axis from the outer
    // product n*n^T = (R + I)/2 using the largest-diagonal column. The angle
    // comes from asin(|vee|/2), which stays well conditioned where acos of
    // the trace does not.
    const double precise = M_PI - std::asin(std::clamp(0.5 * w.norm(), 0.0, 1.0));
    const Mat3 M = 0.5 * (R + Mat3::Identity());
    int j = 0;
    M.diagonal().maxCoeff(&j);
    Vec3 n = M.col(j) / std::sqrt(std::max(M(j, j), 1e-300));
    n.normalize();
    if (w.norm() > 1e-12 && n.dot(w) < 0.0) n = -n;
    return precise * n;
  }
  return (theta / (2.0 * std::sin(theta))) * w;
}

Vec2 project(const CameraIntrinsics& intr, const Pose& pose, const Vec3& p_world) {
  const Vec3 pc = pose.to_camera(p_world);
  if (pc.z() <= 1e-9) fail(Errc::behind_camera, "point depth <= 1e-9 in camera frame");
  return {intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy};
}

Vec3 backproject(const CameraIntrinsics& intr, const Vec2& px, double depth) {
  if (!(depth > 0.0)) fail(Errc::non_positive_depth, "depth must be > 0");
  return {(px.x() - intr.cx) / intr.fx * depth, (px.y() - intr.cy) / intr.fy * depth, depth};
}

Ray pixel_to_ray(const CameraIntrinsics& intr, const Pose& pose, const Vec2& px) {
  if (!intr.contains(px)) fail(Errc::out_of_image, "pixel outside image bounds");
  Vec3 dir_cam((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0);
  dir_cam.normalize();
  return {pose.t, pose.R * dir_cam};
}

double angular_error_deg(const Vec3& a, const Vec3& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= 0.0 || nb <= 0.0) fail(Errc::zero_direction, "direction has zero norm");
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

Frustum make_frustum(const Pose& pose, const CameraIntrinsics& intr, double near_m, double far_m) {
  if (!(near_m > 0.0) || !(near_m < far_m)) fail(Errc::bad_range, "need 0 < near < far");
  Frustum f;
  f.apex = pose.t;
  f.near_m = near_m;
  f.far_m = far_m;
  const double w = intr.width;
  const double h = intr.height;
  const std::array<Vec2, 4> corners = {Vec2(0, 0), Vec2(w, 0), Vec2(w, h), Vec2(0, h)};
  for (int i = 0; i < 4; ++i) f.corner_dirs[i] = pixel_to_ray(intr, pose, corners[i]).direction;
  return f;
}

std::array<double, 7> pose_to_array(const Pose& p) {
  Eigen::Quaterniond q(p.R);
  q.normalize();
  std::array<double, 4> qa = {q.w(), q.x(), q.y(), q.z()};
  for (double v : qa) {
    if (v > 0.0) break;
    if (v < 0.0) {
      for (double& c : qa) c = -c;
      break;
    }
  }
  return {qa[0], qa[1], qa[2], qa[3], p.t.x(), p.t.y(), p.t.z()};
}

Pose pose_from_array(const std::array<double, 7>& a) {
  Eigen::Quaterniond q(a[0], a[1], a[2], a[3]);
  q.normalize();
  Pose p;
  p.R = q.toRotationMatrix();
  p.t = Vec3(a[4], a[5], a[6]);
  return p;
}

}  // namespace gaze3d
