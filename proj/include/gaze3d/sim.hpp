#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gaze3d/gaze_recovery.hpp"
#include "gaze3d/semantic_rois.hpp"
#include "gaze3d/world_model.hpp"

namespace gaze3d {

/// Planar rectangle in world space: origin corner plus two edge vectors.
/// Points are origin + s*u + t*v for s,t in [0,1]; the front face normal is
/// normalize(u x v).
struct PatchSpec {
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  double density = 25.0;  // landmarks per m^2
  std::string roi_label;  // empty: plain surface
};

struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.05;
  std::array<int, 3> dims = {1, 1, 1};
};

struct TrajectorySpec {
  std::vector<Pose> waypoints;  // >= 2
  int frame_count = 2;
  double frame_rate_hz = 30.0;
};

struct GazeScriptEntry {
  std::int64_t t0_ms = 0;
  std::int64_t t1_ms = 0;
  Vec3 target = Vec3::Zero();  // world point fixated during [t0, t1]
};

struct NoiseSpec {
  double keypoint_px_sigma = 0.5;
  double depth_sigma_m = 0.005;
  double gaze_deg_sigma = 0.5;
  double detection_dropout = 0.0;
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int descriptor_dim = 32;
  GridSpec grid;
  CameraIntrinsics scene_intr;  // eye-tracking glasses scene camera
  CameraIntrinsics rgbd_intr;   // scanning camera
  std::vector<PatchSpec> patches;
  TrajectorySpec mapping_trajectory;
  TrajectorySpec gaze_trajectory;
  std::vector<GazeScriptEntry> gaze_script;
  NoiseSpec noise;
  int depth_stride_px = 4;
  Vec2 reference_size = Vec2(200, 150);
  int min_reference_keypoints = 8;
};

struct SceneLandmark {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
  Descriptor descriptor;
  int patch = 0;
  Vec2 patch_uv = Vec2::Zero();  // parameter coordinates on the patch
};

struct Scene {
  SceneSpec spec;
  std::vector<SceneLandmark> landmarks;
  std::vector<ReferenceAppearance> references;  // one per labeled patch
  std::vector<int> reference_patch;             // patch index per reference

  Vec3 patch_normal(int patch) const;
  Vec3 patch_point(int patch, const Vec2& uv) const;
};

/// Seeded landmark placement with well-separated descriptors (min pairwise
/// distance >= descriptor_separation_floor()). Labeled patches double as
/// reference appearances: their landmarks carry reference pixel coordinates.
/// Throws InvalidSpec.
Scene generate_scene(const SceneSpec& spec);

/// Declared minimum pairwise descriptor distance (10x the nominal matching
/// noise sigma of 0.05).
double descriptor_separation_floor();

/// Projects visible landmarks (in bounds, positive depth, front-facing patch)
/// with seeded noise and dropout, plus a dense depth raster over the visible
/// patches. Pure function of (scene, pose, intrinsics, noise, frame_index).
DepthFrame render_frame(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                        const NoiseSpec& noise, int frame_index, bool with_depth = true);

/// Pose at a frame: piecewise-linear translation, spherical-linear rotation.
Pose trajectory_pose(const TrajectorySpec& traj, int frame_index);

/// Nearest front-facing analytic patch intersection.
std::optional<Vec3> intersect_patches(const Scene& scene, const Ray& ray);

struct SampleTruth {
  std::int64_t t_ms = 0;
  int frame_index = 0;
  Ray ray;                    // exact gaze ray (true pose toward the target)
  std::optional<Vec3> point;  // exact analytic scene intersection
  Vec2 gaze_px_true = Vec2::Zero();
};

struct GeneratedSession {
  std::vector<GazeSample> samples;
  std::map<int, std::vector<Keypoint>> frame_keypoints;
  std::vector<Pose> frame_poses;  // ground truth per frame
  std::vector<SampleTruth> truth;
};

/// One gaze sample per trajectory frame; between script entries the target
/// interpolates linearly (a saccade). Throws TargetNotVisible when a scripted
/// target does not project into the scene camera.
GeneratedSession generate_gaze_session(const Scene& scene, const TrajectorySpec& traj,
                                       const std::vector<GazeScriptEntry>& script,
                                       const NoiseSpec& noise);

struct EvalMetrics {
  double median_angular_deg = 0.0;
  double mean_angular_deg = 0.0;
  double median_3d_m = 0.0;
  double mean_3d_m = 0.0;
  double localized_pct = 0.0;
  double hit_pct = 0.0;
  int samples = 0;
  int hits = 0;
};

/// Error statistics of recovered gaze against ground truth. Non-Hit samples
/// are excluded from the error statistics but counted in the rates.
/// Throws LengthMismatch.
EvalMetrics evaluate(const std::vector<GazePoint3D>& recovered,
                     const std::vector<SampleTruth>& truth);

}  // namespace gaze3d
