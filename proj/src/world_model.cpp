#include "gaze3d/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace gaze3d {

const Landmark* SparseMap::find_landmark(std::int64_t id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &landmarks[it->second];
}

Landmark* SparseMap::find_landmark(std::int64_t id) {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &landmarks[it->second];
}

std::int64_t SparseMap::add_landmark(const Vec3& position, const Descriptor& descriptor) {
  Landmark lm;
  lm.id = next_landmark_id++;
  lm.position = position;
  lm.descriptor = descriptor;
  index_[lm.id] = landmarks.size();
  landmarks.push_back(std::move(lm));
  return landmarks.back().id;
}

SparseMap remap_landmark_index(SparseMap map) {
  map.index_.clear();
  for (std::size_t i = 0; i < map.landmarks.size(); ++i) map.index_[map.landmarks[i].id] = i;
  for (const auto& lm : map.landmarks)
    map.next_landmark_id = std::max(map.next_landmark_id, lm.id + 1);
  return map;
}

std::optional<double> depth_at(const DepthFrame& frame, const Vec2& pixel) {
  double best_d2 = 1.0;  // squared pixel distance bound
  std::optional<double> best;
  for (const auto& s : frame.samples) {
    const double d2 = (s.pixel - pixel).squaredNorm();
    if (d2 <= best_d2) {
      best_d2 = d2;
      best = s.depth;
    }
  }
  return best;
}

SparseMap bootstrap_map(const DepthFrame& frame, const CameraIntrinsics& intr) {
  std::vector<std::pair<int, double>> with_depth;
  for (int i = 0; i < static_cast<int>(frame.keypoints.size()); ++i) {
    if (auto d = depth_at(frame, frame.keypoints[i].pixel)) with_depth.emplace_back(i, *d);
  }
  if (with_depth.size() < 10)
    fail(Errc::too_few_keypoints, "bootstrap needs >= 10 keypoints with depth, got " +
                                      std::to_string(with_depth.size()));

  SparseMap map;
  map.descriptor_dim = static_cast<int>(frame.keypoints[with_depth[0].first].descriptor.size());
  Keyframe kf;
  kf.id = 0;
  kf.set_pose(Pose::identity());
  kf.keypoints = frame.keypoints;
  for (const auto& [idx, d] : with_depth) {
    const Vec3 pos = backproject(intr, frame.keypoints[idx].pixel, d);
    const std::int64_t lm = map.add_landmark(pos, frame.keypoints[idx].descriptor);
    kf.landmark_links.emplace_back(idx, lm);
  }
  map.keyframes.push_back(std::move(kf));
  return map;
}

namespace {

constexpr double kGatePx = 50.0;
constexpr double kRatioThreshold = 0.8;

struct MatchedPoint {
  int keypoint_index;
  std::size_t landmark_index;
};

// Projection-gated matching: each keypoint is matched only against landmarks
// whose prior projection lies within kGatePx of it.
std::vector<MatchedPoint> match_gated(const SparseMap& map, const std::vector<Keypoint>& keypoints,
                                      const CameraIntrinsics& intr, const Pose& prior) {
  struct CellKey {
    int x, y;
    bool operator<(const CellKey& o) const { return x != o.x ? x < o.x : y < o.y; }
  };
  std::map<CellKey, std::vector<std::pair<std::size_t, Vec2>>> cells;
  for (std::size_t li = 0; li < map.landmarks.size(); ++li) {
    const Vec3 pc = prior.to_camera(map.landmarks[li].position);
    if (pc.z() <= 1e-9) continue;
    const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
    if (px.x() < -kGatePx || px.x() > intr.width + kGatePx || px.y() < -kGatePx ||
        px.y() > intr.height + kGatePx)
      continue;
    cells[{static_cast<int>(std::floor(px.x() / kGatePx)),
           static_cast<int>(std::floor(px.y() / kGatePx))}]
        .emplace_back(li, px);
  }

  std::vector<MatchedPoint> matches;
  for (int q = 0; q < static_cast<int>(keypoints.size()); ++q) {
    const Vec2& qp = keypoints[q].pixel;
    const int cx = static_cast<int>(std::floor(qp.x() / kGatePx));
    const int cy = static_cast<int>(std::floor(qp.y() / kGatePx));
    std::size_t best = 0, second = 0;
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    bool found = false;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        auto it = cells.find({cx + dx, cy + dy});
        if (it == cells.end()) continue;
        for (const auto& [li, proj] : it->second) {
          if ((proj - qp).norm() > kGatePx) continue;
          const double d = (map.landmarks[li].descriptor - keypoints[q].descriptor).norm();
          if (d < d1) {
            d2 = d1;
            second = best;
            d1 = d;
            best = li;
            found = true;
          } else if (d < d2) {
            d2 = d;
            second = li;
          }
        }
      }
    }
    (void)second;
    if (!found) continue;
    if (std::isfinite(d2)) {
      if (d2 <= 0.0 || d1 / d2 >= kRatioThreshold) continue;
    }
    matches.push_back({q, best});
  }
  return matches;
}

std::vector<MatchedPoint> match_global(const SparseMap& map,
                                       const std::vector<Keypoint>& keypoints) {
  std::vector<MatchedPoint> matches;
  for (int q = 0; q < static_cast<int>(keypoints.size()); ++q) {
    std::size_t best = 0;
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    for (std::size_t li = 0; li < map.landmarks.size(); ++li) {
      const double d = (map.landmarks[li].descriptor - keypoints[q].descriptor).norm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = li;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (map.landmarks.size() > 1) {
      if (d2 <= 0.0 || d1 / d2 >= kRatioThreshold) continue;
    }
    matches.push_back({q, best});
  }
  return matches;
}

}  // namespace

TrackResult track_pose(const SparseMap& map, const std::vector<Keypoint>& keypoints,
                       const CameraIntrinsics& intr, const std::optional<Pose>& prior,
                       const PnPConfig& cfg) {
  if (map.empty()) fail(Errc::too_few_matches, "map has no landmarks");
  const std::size_t needed = static_cast<std::size_t>(std::max(6, cfg.min_inliers));

  TrackResult result;
  std::vector<MatchedPoint> matches;
  if (prior) {
    matches = match_gated(map, keypoints, intr, *prior);
    result.used_prior_gate = true;
  }
  if (matches.size() < needed) {
    matches = match_global(map, keypoints);
    result.used_prior_gate = false;
  }
  if (matches.size() < needed)
    fail(Errc::too_few_matches,
         "only " + std::to_string(matches.size()) + " descriptor matches, need " +
             std::to_string(needed));

  result.correspondences.reserve(matches.size());
  result.keypoint_indices.reserve(matches.size());
  for (const auto& m : matches) {
    const Landmark& lm = map.landmarks[m.landmark_index];
    result.correspondences.push_back({keypoints[m.keypoint_index].pixel, lm.position, lm.id});
    result.keypoint_indices.push_back(m.keypoint_index);
  }
  result.pnp = ransac_pnp(result.correspondences, intr, cfg);
  return result;
}

bool maybe_insert_keyframe(SparseMap& map, const std::vector<Keypoint>& keypoints,
                           const TrackResult& track, const DepthFrame& depth,
                           const CameraIntrinsics& intr, const KeyframePolicy& policy) {
  const Pose& pose = track.pnp.pose;
  const double inlier_ratio =
      track.correspondences.empty()
          ? 0.0
          : static_cast<double>(track.pnp.inlier_count) / track.correspondences.size();

  bool insert = map.keyframes.empty();
  if (!insert) {
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < map.keyframes.size(); ++i) {
      const double d = (map.keyframes[i].pose.t - pose.t).norm();
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    const double rot_deg =
        rotation_angle(map.keyframes[nearest].pose.R.transpose() * pose.R) * 180.0 / M_PI;
    insert = best >= policy.min_translation_m || rot_deg >= policy.min_rotation_deg ||
             inlier_ratio < policy.min_inlier_ratio;
  }
  if (!insert) return false;

  Keyframe kf;
  kf.id = map.keyframes.empty() ? 0 : map.keyframes.back().id + 1;
  kf.set_pose(pose);
  kf.keypoints = keypoints;

  std::set<int> matched(track.keypoint_indices.begin(), track.keypoint_indices.end());
  for (std::size_t i = 0; i < track.correspondences.size(); ++i) {
    if (!track.pnp.inlier_mask[i]) continue;
    kf.landmark_links.emplace_back(track.keypoint_indices[i], track.correspondences[i].landmark_id);
    if (Landmark* lm = map.find_landmark(track.correspondences[i].landmark_id))
      ++lm->observation_count;
  }

  for (int i = 0; i < static_cast<int>(keypoints.size()); ++i) {
    if (matched.count(i)) continue;
    const auto d = depth_at(depth, keypoints[i].pixel);
    if (!d) continue;
    // Exact-duplicate descriptors would poison future ratio tests.
    bool duplicate = false;
    for (const auto& lm : map.landmarks) {
      if ((lm.descriptor - keypoints[i].descriptor).norm() < 1e-9) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    const Vec3 pos = kf.pose.to_world(backproject(intr, keypoints[i].pixel, *d));
    const std::int64_t id = map.add_landmark(pos, keypoints[i].descriptor);
    kf.landmark_links.emplace_back(i, id);
  }
  map.keyframes.push_back(std::move(kf));
  return true;
}

OccupancyGrid::OccupancyGrid(const Vec3& origin, double resolution, const std::array<int, 3>& dims,
                             const OccupancyParams& params)
    : origin_(origin), res_(resolution), dims_(dims), params_(params) {
  if (!(resolution > 0.0)) fail(Errc::invalid_spec, "grid resolution must be > 0");
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) fail(Errc::invalid_spec, "grid dims must be >= 1");
  logodds_.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0f);
}

std::optional<std::array<int, 3>> OccupancyGrid::voxel_of(const Vec3& p) const {
  std::array<int, 3> v;
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p(a) - origin_(a)) / res_);
    if (f < 0.0 || f >= dims_[a]) return std::nullopt;
    v[a] = static_cast<int>(f);
  }
  return v;
}

Vec3 OccupancyGrid::voxel_center(const std::array<int, 3>& v) const {
  return origin_ + res_ * Vec3(v[0] + 0.5, v[1] + 0.5, v[2] + 0.5);
}

bool OccupancyGrid::is_occupied(const Vec3& p) const {
  const auto v = voxel_of(p);
  return v && is_occupied_voxel(*v);
}

namespace {

// Parametric intersection of a ray with an axis-aligned box; false when the
// ray misses entirely.
bool clip_to_box(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi, double& t0,
                 double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d(a) == 0.0) {
      if (o(a) < lo(a) || o(a) > hi(a)) return false;
      continue;
    }
    double ta = (lo(a) - o(a)) / d(a);
    double tb = (hi(a) - o(a)) / d(a);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1;
}

struct VoxelWalker {
  std::array<int, 3> voxel;
  std::array<int, 3> step;
  std::array<double, 3> t_max;
  std::array<double, 3> t_delta;
  double t = 0.0;

  // Starts at parameter t_start along the ray (assumed inside the grid).
  VoxelWalker(const Vec3& o, const Vec3& d, const Vec3& origin, double res,
              const std::array<int, 3>& dims, double t_start) {
    t = t_start;
    const Vec3 p = o + t_start * d;
    for (int a = 0; a < 3; ++a) {
      int v = static_cast<int>(std::floor((p(a) - origin(a)) / res));
      v = std::clamp(v, 0, dims[a] - 1);
      voxel[a] = v;
      if (d(a) > 0.0) {
        step[a] = 1;
        t_max[a] = (origin(a) + (v + 1) * res - o(a)) / d(a);
        t_delta[a] = res / d(a);
      } else if (d(a) < 0.0) {
        step[a] = -1;
        t_max[a] = (origin(a) + v * res - o(a)) / d(a);
        t_delta[a] = res / -d(a);
      } else {
        step[a] = 0;
        t_max[a] = std::numeric_limits<double>::infinity();
        t_delta[a] = std::numeric_limits<double>::infinity();
      }
    }
  }

  // Advances to the next voxel; returns false when the walk left the grid.
  bool advance(const std::array<int, 3>& dims) {
    int a = 0;
    if (t_max[1] < t_max[a]) a = 1;
    if (t_max[2] < t_max[a]) a = 2;
    t = t_max[a];
    voxel[a] += step[a];
    if (voxel[a] < 0 || voxel[a] >= dims[a]) return false;
    t_max[a] += t_delta[a];
    return true;
  }
};

}  // namespace

std::size_t OccupancyGrid::integrate_depth(const DepthFrame& frame, const Pose& pose,
                                           const CameraIntrinsics& intr) {
  if (scratch_.size() != logodds_.size()) scratch_.assign(logodds_.size(), 0.0);
  touched_.clear();

  auto deposit = [&](const std::array<int, 3>& v, double delta) {
    const std::size_t li = linear_index(v[0], v[1], v[2]);
    if (scratch_[li] == 0.0) touched_.push_back(li);
    scratch_[li] += delta;
  };

  const Vec3 lo = origin_;
  const Vec3 hi = origin_ + res_ * Vec3(dims_[0], dims_[1], dims_[2]);
  std::size_t skipped = 0;

  for (const auto& s : frame.samples) {
    const Vec3 endpoint = pose.to_world(backproject(intr, s.pixel, s.depth));
    const auto end_voxel = voxel_of(endpoint);
    if (!end_voxel) {
      ++skipped;
      continue;
    }
    const Vec3 o = pose.t;
    const Vec3 d = endpoint - o;
    const double len = d.norm();
    if (len <= 0.0) {
      deposit(*end_voxel, params_.l_occ);
      continue;
    }
    double t0, t1;
    if (!clip_to_box(o, d, lo, hi, t0, t1)) {
      deposit(*end_voxel, params_.l_occ);
      continue;
    }
    t0 = std::max(t0, 0.0);
    VoxelWalker walker(o, d, origin_, res_, dims_, t0);
    // Free space along the ray, excluding the endpoint voxel. d is not unit
    // length, so the endpoint sits at parameter t = 1.
    const std::size_t max_steps =
        static_cast<std::size_t>(dims_[0]) + dims_[1] + dims_[2] + 3;
    for (std::size_t n = 0; n < max_steps; ++n) {
      if (walker.voxel == *end_voxel) break;
      if (walker.t > 1.0) break;
      deposit(walker.voxel, params_.l_free);
      if (!walker.advance(dims_)) break;
    }
    deposit(*end_voxel, params_.l_occ);
  }

  for (const std::size_t li : touched_) {
    const double v = static_cast<double>(logodds_[li]) + scratch_[li];
    logodds_[li] = std::clamp(static_cast<float>(v), params_.l_min, params_.l_max);
    scratch_[li] = 0.0;
  }
  return skipped;
}

std::optional<RayHit> OccupancyGrid::cast_ray(const Ray& ray, double max_range) const {
  if (!(max_range > 0.0)) fail(Errc::bad_range, "max_range must be > 0");
  const Vec3 lo = origin_;
  const Vec3 hi = origin_ + res_ * Vec3(dims_[0], dims_[1], dims_[2]);
  double t0, t1;
  if (!clip_to_box(ray.origin, ray.direction, lo, hi, t0, t1)) return std::nullopt;
  if (t1 < 0.0) return std::nullopt;
  t0 = std::max(t0, 0.0);
  if (t0 > max_range) return std::nullopt;

  VoxelWalker walker(ray.origin, ray.direction, origin_, res_, dims_, t0);
  const std::size_t max_steps = static_cast<std::size_t>(dims_[0]) + dims_[1] + dims_[2] + 3;
  for (std::size_t n = 0; n < max_steps; ++n) {
    if (walker.t > max_range) return std::nullopt;
    if (is_occupied_voxel(walker.voxel))
      return RayHit{ray.origin + walker.t * ray.direction, walker.voxel, walker.t};
    if (!walker.advance(dims_)) return std::nullopt;
  }
  return std::nullopt;
}

std::vector<std::pair<Vec3, float>> OccupancyGrid::export_occupied() const {
  std::vector<std::pair<Vec3, float>> out;
  for (int iz = 0; iz < dims_[2]; ++iz)
    for (int iy = 0; iy < dims_[1]; ++iy)
      for (int ix = 0; ix < dims_[0]; ++ix) {
        const float v = logodds_[linear_index(ix, iy, iz)];
        if (v > params_.occupied_threshold) out.emplace_back(voxel_center({ix, iy, iz}), v);
      }
  return out;
}

}  // namespace gaze3d
