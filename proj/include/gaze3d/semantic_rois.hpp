#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gaze3d/features.hpp"
#include "gaze3d/world_model.hpp"

namespace gaze3d {

struct ReferenceAppearance {
  std::string roi_label;
  std::vector<Keypoint> keypoints;  // reference-image pixel coordinates
  Vec2 reference_size = Vec2::Zero();
};

struct RoiDetection {
  std::string roi_label;
  int frame_index = 0;
  Mat3 homography;                  // reference pixels -> frame pixels, h33 = 1
  std::array<Vec2, 4> corner_quad;  // image of the reference rectangle corners
  int inlier_count = 0;
};

struct ROI3D {
  std::string roi_label;
  std::array<Vec3, 4> polygon;  // planar within tolerance
  Vec3 normal = Vec3::UnitZ();  // unit, oriented toward the observing camera
  int support_count = 1;
};

struct HomographyResult {
  Mat3 H;
  std::vector<std::uint8_t> inlier_mask;
  int inlier_count = 0;
};

/// RANSAC homography from 4-point samples solved by Hartley-normalized DLT;
/// inliers by symmetric transfer error, final H re-estimated from all inliers
/// and normalized to h33 = 1. Throws InsufficientPairs / NoConsensus (< 8
/// inliers).
HomographyResult homography_dlt_ransac(const std::vector<std::pair<Vec2, Vec2>>& pairs,
                                       double threshold_px, std::uint64_t seed,
                                       int iterations = 200);

struct RoiDetectConfig {
  int top_n = 5;
  double ratio_threshold = 0.8;
  double ransac_threshold_px = 3.0;
  int ransac_iterations = 200;
  int min_inliers = 12;
  double min_area_px2 = 400.0;
  std::uint64_t seed = 1;
};

/// Vocabulary-tree shortlist over reference appearances plus homography
/// verification of each shortlisted candidate.
class ReferenceIndex {
 public:
  ReferenceIndex(std::vector<ReferenceAppearance> refs, int k, int levels, std::uint64_t seed);

  const std::vector<ReferenceAppearance>& references() const { return refs_; }
  const VocabularyTree& tree() const { return tree_; }

  /// Detections for one frame; an empty result is not an error.
  std::vector<RoiDetection> detect(const std::vector<Keypoint>& frame_keypoints, int frame_index,
                                   const RoiDetectConfig& cfg) const;

 private:
  std::vector<ReferenceAppearance> refs_;
  VocabularyTree tree_;
};

/// Casts the detection's corner rays into the grid and fits a plane; absent
/// when a corner misses or the hits are not coplanar within plane_tol_m.
std::optional<ROI3D> lift_roi(const RoiDetection& detection, const Pose& frame_pose,
                              const CameraIntrinsics& intr, const OccupancyGrid& grid,
                              double max_range = 10.0, double plane_tol_m = 0.02);

/// Groups detections by label, clusters by centroid distance and averages
/// corner points (support-count weighted, nearest-cyclic corner ordering).
std::vector<ROI3D> merge_rois(const std::vector<ROI3D>& rois, double cluster_dist_m = 0.15);

/// Convexity test for a quad (strictly convex, consistent winding).
bool quad_convex(const std::array<Vec2, 4>& quad);

/// Shoelace area of a quad in pixels^2.
double quad_area(const std::array<Vec2, 4>& quad);

}  // namespace gaze3d
