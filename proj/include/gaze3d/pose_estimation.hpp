#pragma once

#include <cstdint>
#include <vector>

#include "gaze3d/geometry.hpp"

namespace gaze3d {

struct Correspondence {
  Vec2 pixel;
  Vec3 point;                    // world meters
  std::int64_t landmark_id = -1;  // optional
};

struct PnPConfig {
  int ransac_iterations = 200;
  double inlier_threshold_px = 2.0;
  int min_inliers = 12;
  int refine_max_iterations = 50;
  double refine_convergence_px = 1e-12;
  std::uint64_t seed = 1;
};

struct PnPResult {
  Pose pose;
  std::vector<std::uint8_t> inlier_mask;  // one flag per input correspondence
  double rmse_px = 0.0;                   // over inliers only
  int inlier_count = 0;
};

struct RefineResult {
  Pose pose;
  double rmse_px = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> rmse_trace;  // accepted RMSE values, starting at the initial one
};

/// Closed-form absolute pose from n >= 4 2D-3D correspondences.
///
/// Control points are the centroid plus the principal axes of the world
/// points (3 control points when the cloud is planar), each point is written
/// in barycentric coordinates, the projection constraints form a 2n x 12
/// (or 2n x 9) homogeneous system, and candidate solutions are assembled from
/// the kernel basis vectors for null-space dimensions N = 1..4 with the
/// beta weights solved from the inter-control-point distance constraints and
/// polished by Gauss-Newton. The candidate with the lowest reprojection RMSE
/// wins. Throws InsufficientCorrespondences / DegenerateConfiguration.
Pose epnp_solve(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr);

/// Levenberg-Marquardt over a left-multiplied se(3) increment (axis-angle +
/// translation), minimizing the reprojection error. Only accepted steps are
/// kept, so the returned RMSE never exceeds the initial one.
RefineResult refine_pose(const Pose& initial, const std::vector<Correspondence>& corrs,
                         const CameraIntrinsics& intr, const PnPConfig& cfg);

/// Seeded deterministic RANSAC: 6-point EPnP hypotheses, inliers by
/// reprojection error, best consensus refined with refine_pose and the mask
/// re-evaluated once. Throws NoConsensus when the best count is below
/// cfg.min_inliers.
PnPResult ransac_pnp(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr,
                     const PnPConfig& cfg);

/// RMS of per-point pixel residual norms over points in front of the camera.
/// Throws AllBehindCamera when no point has positive depth.
double reprojection_rmse(const Pose& pose, const std::vector<Correspondence>& corrs,
                         const CameraIntrinsics& intr);

/// Analytic 2x6 reprojection Jacobian blocks stacked for all points in front
/// of the camera; exposed for finite-difference verification.
Eigen::MatrixXd reprojection_jacobian(const Pose& pose, const std::vector<Correspondence>& corrs,
                                      const CameraIntrinsics& intr);

}  // namespace gaze3d
