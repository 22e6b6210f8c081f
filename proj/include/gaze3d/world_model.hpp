#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gaze3d/features.hpp"
#include "gaze3d/geometry.hpp"
#include "gaze3d/pose_estimation.hpp"

namespace gaze3d {

struct Landmark {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
  Descriptor descriptor;
  int observation_count = 1;
};

struct Keyframe {
  std::int64_t id = 0;
  Pose pose;
  // Serialized pose is authoritative for persistence so that save/load/save
  // round trips are byte-identical; the matrix is derived from it.
  std::array<double, 7> pose7 = {1, 0, 0, 0, 0, 0, 0};
  std::vector<Keypoint> keypoints;
  std::vector<std::pair<int, std::int64_t>> landmark_links;  // keypoint index -> landmark id

  void set_pose(const Pose& p) {
    pose7 = pose_to_array(p);
    pose = pose_from_array(pose7);
  }
};

struct SparseMap {
  int descriptor_dim = 0;
  std::vector<Landmark> landmarks;  // ascending id
  std::vector<Keyframe> keyframes;  // ascending id
  std::int64_t next_landmark_id = 0;

  const Landmark* find_landmark(std::int64_t id) const;
  Landmark* find_landmark(std::int64_t id);
  std::int64_t add_landmark(const Vec3& position, const Descriptor& descriptor);
  bool empty() const { return landmarks.empty(); }

 private:
  std::unordered_map<std::int64_t, std::size_t> index_;
  friend SparseMap remap_landmark_index(SparseMap map);
};

/// Rebuilds the id index after bulk-filling `landmarks` (used by the loader).
SparseMap remap_landmark_index(SparseMap map);

struct DepthSample {
  Vec2 pixel;
  double depth = 0.0;  // meters, > 0
};

struct DepthFrame {
  std::int64_t timestamp_ms = 0;
  int frame_index = 0;
  std::vector<DepthSample> samples;
  std::vector<Keypoint> keypoints;
};

/// Nearest depth sample within 1 px of the pixel, if any.
std::optional<double> depth_at(const DepthFrame& frame, const Vec2& pixel);

/// First keyframe at identity with one landmark per keypoint that has depth.
/// Throws TooFewKeypoints when fewer than 10 keypoints carry depth.
SparseMap bootstrap_map(const DepthFrame& frame, const CameraIntrinsics& intr);

struct TrackResult {
  PnPResult pnp;
  std::vector<Correspondence> correspondences;  // landmark_id filled in
  std::vector<int> keypoint_indices;            // parallel to correspondences
  bool used_prior_gate = false;
};

/// Descriptor matching (ratio 0.8) against the map followed by ransac_pnp.
/// With a prior pose, matching is gated to landmarks projecting within 50 px
/// of each keypoint, falling back to global matching when that yields too
/// few candidates. Throws TooFewMatches / NoConsensus.
TrackResult track_pose(const SparseMap& map, const std::vector<Keypoint>& keypoints,
                       const CameraIntrinsics& intr, const std::optional<Pose>& prior,
                       const PnPConfig& cfg);

struct KeyframePolicy {
  double min_translation_m = 0.25;
  double min_rotation_deg = 10.0;
  double min_inlier_ratio = 0.5;
};

/// Inserts a keyframe (plus new landmarks from unmatched keypoints with
/// depth) when the pose is far from the nearest keyframe or tracking quality
/// dropped. Returns whether an insertion happened.
bool maybe_insert_keyframe(SparseMap& map, const std::vector<Keypoint>& keypoints,
                           const TrackResult& track, const DepthFrame& depth,
                           const CameraIntrinsics& intr, const KeyframePolicy& policy = {});

struct OccupancyParams {
  float l_occ = 0.85f;
  float l_free = -0.4f;
  float l_min = -2.0f;
  float l_max = 3.5f;
  float occupied_threshold = 0.0f;
};

struct RayHit {
  Vec3 point;
  std::array<int, 3> voxel;
  double t = 0.0;
};

/// Axis-aligned voxel grid of clamped log-odds occupancy. Values are stored
/// x-fastest; the grid is eagerly allocated from its declared bounding box.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Vec3& origin, double resolution, const std::array<int, 3>& dims,
                const OccupancyParams& params = {});

  const Vec3& origin() const { return origin_; }
  double resolution() const { return res_; }
  const std::array<int, 3>& dims() const { return dims_; }
  const OccupancyParams& params() const { return params_; }
  const std::vector<float>& values() const { return logodds_; }
  std::vector<float>& values() { return logodds_; }

  std::size_t linear_index(int ix, int iy, int iz) const {
    return static_cast<std::size_t>(ix) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(iy) + static_cast<std::size_t>(dims_[1]) * iz);
  }
  bool contains_index(int ix, int iy, int iz) const {
    return ix >= 0 && iy >= 0 && iz >= 0 && ix < dims_[0] && iy < dims_[1] && iz < dims_[2];
  }
  /// Voxel containing a world point, or nullopt outside the grid.
  std::optional<std::array<int, 3>> voxel_of(const Vec3& p) const;
  Vec3 voxel_center(const std::array<int, 3>& v) const;
  float log_odds(const std::array<int, 3>& v) const { return logodds_[linear_index(v[0], v[1], v[2])]; }

  bool is_occupied_voxel(const std::array<int, 3>& v) const {
    return log_odds(v) > params_.occupied_threshold;
  }
  bool is_occupied(const Vec3& p) const;

  /// Casts depth sample rays from the camera center: traversed voxels gain
  /// l_free, the endpoint voxel gains l_occ, everything clamped to
  /// [l_min, l_max]. Each voxel is updated at most once per sample ray.
  /// Returns the number of samples skipped because their endpoint lies
  /// outside the grid.
  std::size_t integrate_depth(const DepthFrame& frame, const Pose& pose,
                              const CameraIntrinsics& intr);

  /// Amanatides-Woo walk to the first occupied voxel. A ray starting inside
  /// an occupied voxel hits at its origin; a miss is an empty optional.
  std::optional<RayHit> cast_ray(const Ray& ray, double max_range) const;

  /// Centers of occupied voxels in ascending (z, y, x) order.
  std::vector<std::pair<Vec3, float>> export_occupied() const;

 private:
  Vec3 origin_ = Vec3::Zero();
  double res_ = 0.05;
  std::array<int, 3> dims_ = {0, 0, 0};
  OccupancyParams params_;
  std::vector<float> logodds_;

  // per-call integration scratch (net delta per touched voxel)
  std::vector<double> scratch_;
  std::vector<std::size_t> touched_;
};

}  // namespace gaze3d
