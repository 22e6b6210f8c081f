#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gaze3d/world_model.hpp"

namespace gaze3d {

struct GazeSample {
  std::int64_t t_ms = 0;
  int frame_index = 0;
  Vec2 gaze_px = Vec2::Zero();
  bool valid = true;
};

enum class FrameStatus { Localized, Lost };

struct LocalizedFrame {
  int frame_index = 0;
  Pose pose;
  int inlier_count = 0;
  double rmse_px = 0.0;
  FrameStatus status = FrameStatus::Lost;
};

enum class GazeStatus { Hit, Miss, FrameLost, Invalid };

const char* gaze_status_name(GazeStatus s);
std::optional<GazeStatus> gaze_status_from_name(const std::string& name);

struct GazePoint3D {
  std::int64_t t_ms = 0;
  int frame_index = 0;
  GazeStatus status = GazeStatus::Invalid;
  Vec3 point = Vec3::Zero();  // meaningful iff status == Hit
  Ray ray;                    // meaningful iff has_ray
  bool has_ray = false;
  bool frame_localized = false;
  std::optional<std::array<double, 7>> frame_pose;  // present iff frame localized
};

/// Localizes one scene-camera frame against the map; a tracking failure is a
/// Lost status, not an error.
LocalizedFrame localize_frame(const SparseMap& map, const std::vector<Keypoint>& keypoints,
                              const CameraIntrinsics& intr_etg,
                              const std::optional<LocalizedFrame>& prev, const PnPConfig& cfg);

/// Casts the gaze pixel's viewing ray into the occupancy grid.
GazePoint3D recover_gaze(const GazeSample& sample, const LocalizedFrame& frame,
                         const CameraIntrinsics& intr_etg, const OccupancyGrid& grid,
                         double max_range);

struct SessionResult {
  std::vector<LocalizedFrame> frames;   // ascending frame index
  std::vector<GazePoint3D> points;      // one per input sample, in order
  double localized_pct = 0.0;           // frames
  double hit_pct = 0.0;                 // samples
};

/// Localizes every frame (sequential prior chaining: the most recent
/// localized pose seeds the next frame) and recovers every sample.
/// Throws EmptySession.
SessionResult recover_session(const std::vector<GazeSample>& samples,
                              const std::map<int, std::vector<Keypoint>>& frame_keypoints,
                              const SparseMap& map, const OccupancyGrid& grid,
                              const CameraIntrinsics& intr_etg, const PnPConfig& cfg,
                              double max_range = 10.0);

/// One frustum per localized frame; lost frames are skipped.
std::vector<Frustum> frustum_track(const std::vector<LocalizedFrame>& frames,
                                   const CameraIntrinsics& intr_etg, double near_m, double far_m);

}  // namespace gaze3d
