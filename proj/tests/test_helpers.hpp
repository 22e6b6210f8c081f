#pragma once

#include <vector>

#include "gaze3d/pose_estimation.hpp"
#include "gaze3d/rng.hpp"

namespace gaze3d::test {

inline Vec3 rand_unit(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline Pose rand_pose(Rng& rng, double max_angle_rad = 2.5, double max_offset_m = 1.0) {
  Pose p;
  p.R = rotation_exp(rand_unit(rng) * rng.uniform(0.0, max_angle_rad));
  p.t = Vec3(rng.uniform(-max_offset_m, max_offset_m), rng.uniform(-max_offset_m, max_offset_m),
             rng.uniform(-max_offset_m, max_offset_m));
  return p;
}

inline CameraIntrinsics test_intrinsics() {
  CameraIntrinsics intr;
  intr.fx = 600;
  intr.fy = 600;
  intr.cx = 320;
  intr.cy = 240;
  intr.width = 640;
  intr.height = 480;
  return intr;
}

/// Points in front of the camera (in its own frame), mapped to world through
/// the pose, projected exactly. Planar variant puts all points on one plane.
inline std::vector<Correspondence> exact_correspondences(const Pose& pose,
                                                         const CameraIntrinsics& intr, int n,
                                                         Rng& rng, bool planar = false) {
  std::vector<Correspondence> corrs;
  corrs.reserve(n);
  while (static_cast<int>(corrs.size()) < n) {
    Vec3 p_cam(rng.uniform(-0.8, 0.8), rng.uniform(-0.6, 0.6), rng.uniform(1.5, 4.0));
    if (planar) {
      // A slanted world plane: z_cam depends on x and y.
      p_cam.z() = 2.0 + 0.3 * p_cam.x() - 0.2 * p_cam.y();
    }
    const Vec3 p_world = pose.to_world(p_cam);
    Vec2 px;
    try {
      px = project(intr, pose, p_world);
    } catch (const Error&) {
      continue;
    }
    if (!intr.contains(px)) continue;
    corrs.push_back({px, p_world, static_cast<std::int64_t>(corrs.size())});
  }
  return corrs;
}

inline double rotation_error_rad(const Pose& a, const Pose& b) {
  return rotation_angle(a.R.transpose() * b.R);
}

inline double translation_error_m(const Pose& a, const Pose& b) { return (a.t - b.t).norm(); }

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const std::size_t m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

}  // namespace gaze3d::test
