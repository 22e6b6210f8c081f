#include "gaze3d/gaze_recovery.hpp"

#include <algorithm>

namespace gaze3d {

const char* gaze_status_name(GazeStatus s) {
  switch (s) {
    case GazeStatus::Hit: return "hit";
    case GazeStatus::Miss: return "miss";
    case GazeStatus::FrameLost: return "frame_lost";
    case GazeStatus::Invalid: return "invalid";
  }
  return "invalid";
}

std::optional<GazeStatus> gaze_status_from_name(const std::string& name) {
  if (name == "hit") return GazeStatus::Hit;
  if (name == "miss") return GazeStatus::Miss;
  if (name == "frame_lost") return GazeStatus::FrameLost;
  if (name == "invalid") return GazeStatus::Invalid;
  return std::nullopt;
}

LocalizedFrame localize_frame(const SparseMap& map, const std::vector<Keypoint>& keypoints,
                              const CameraIntrinsics& intr_etg,
                              const std::optional<LocalizedFrame>& prev, const PnPConfig& cfg) {
  LocalizedFrame out;
  std::optional<Pose> prior;
  if (prev && prev->status == FrameStatus::Localized) prior = prev->pose;
  try {
    const TrackResult track = track_pose(map, keypoints, intr_etg, prior, cfg);
    out.pose = track.pnp.pose;
    out.inlier_count = track.pnp.inlier_count;
    out.rmse_px = track.pnp.rmse_px;
    out.status = FrameStatus::Localized;
  } catch (const Error& e) {
    if (e.code() != Errc::too_few_matches && e.code() != Errc::no_consensus) throw;
    out.status = FrameStatus::Lost;
  }
  return out;
}

GazePoint3D recover_gaze(const GazeSample& sample, const LocalizedFrame& frame,
                         const CameraIntrinsics& intr_etg, const OccupancyGrid& grid,
                         double max_range) {
  GazePoint3D out;
  out.t_ms = sample.t_ms;
  out.frame_index = sample.frame_index;
  out.frame_localized = frame.status == FrameStatus::Localized;
  if (out.frame_localized) out.frame_pose = pose_to_array(frame.pose);
  if (!sample.valid) {
    out.status = GazeStatus::Invalid;
    return out;
  }
  if (frame.status != FrameStatus::Localized) {
    out.status = GazeStatus::FrameLost;
    return out;
  }
  out.ray = pixel_to_ray(intr_etg, frame.pose, sample.gaze_px);
  out.has_ray = true;
  if (const auto hit = grid.cast_ray(out.ray, max_range)) {
    out.status = GazeStatus::Hit;
    out.point = hit->point;
  } else {
    out.status = GazeStatus::Miss;
  }
  return out;
}

SessionResult recover_session(const std::vector<GazeSample>& samples,
                              const std::map<int, std::vector<Keypoint>>& frame_keypoints,
                              const SparseMap& map, const OccupancyGrid& grid,
                              const CameraIntrinsics& intr_etg, const PnPConfig& cfg,
                              double max_range) {
  if (samples.empty() && frame_keypoints.empty())
    fail(Errc::empty_session, "session has no frames and no samples");

  SessionResult result;
  std::map<int, LocalizedFrame> by_frame;
  std::optional<LocalizedFrame> prev;
  for (const auto& [frame_index, keypoints] : frame_keypoints) {
    LocalizedFrame lf = localize_frame(map, keypoints, intr_etg, prev, cfg);
    lf.frame_index = frame_index;
    if (lf.status == FrameStatus::Localized) prev = lf;
    by_frame.emplace(frame_index, lf);
    result.frames.push_back(lf);
  }

  LocalizedFrame lost;
  lost.status = FrameStatus::Lost;
  result.points.reserve(samples.size());
  for (const auto& s : samples) {
    const auto it = by_frame.find(s.frame_index);
    const LocalizedFrame& lf = it == by_frame.end() ? lost : it->second;
    result.points.push_back(recover_gaze(s, lf, intr_etg, grid, max_range));
  }

  const std::size_t localized =
      std::count_if(result.frames.begin(), result.frames.end(),
                    [](const LocalizedFrame& f) { return f.status == FrameStatus::Localized; });
  const std::size_t hits =
      std::count_if(result.points.begin(), result.points.end(),
                    [](const GazePoint3D& p) { return p.status == GazeStatus::Hit; });
  result.localized_pct =
      result.frames.empty() ? 0.0 : 100.0 * static_cast<double>(localized) / result.frames.size();
  result.hit_pct =
      result.points.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / result.points.size();
  return result;
}

std::vector<Frustum> frustum_track(const std::vector<LocalizedFrame>& frames,
                                   const CameraIntrinsics& intr_etg, double near_m, double far_m) {
  std::vector<Frustum> out;
  for (const auto& f : frames) {
    if (f.status != FrameStatus::Localized) continue;
    out.push_back(make_frustum(f.pose, intr_etg, near_m, far_m));
  }
  return out;
}

}  // namespace gaze3d
