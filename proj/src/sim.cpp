#include "gaze3d/sim.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>

#include "gaze3d/rng.hpp"

namespace gaze3d {

namespace {

constexpr double kSeparationFloor = 0.5;  // 10 x matching noise sigma 0.05

enum Stream : std::uint64_t {
  kStreamLandmarks = 0x11,
  kStreamDescriptors = 0x22,
  kStreamFrame = 0x33,
  kStreamGaze = 0x44,
};

Descriptor separated_descriptor(Rng& rng, int dim, const std::vector<Descriptor>& existing) {
  // Random direction scaled well above the separation floor; resample on the
  // (astronomically rare) near-collision.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Descriptor d(dim);
    for (int i = 0; i < dim; ++i) d(i) = rng.gaussian();
    const double n = d.norm();
    if (n < 1e-9) continue;
    d *= 4.0 / n;
    bool ok = true;
    for (const auto& e : existing) {
      if ((e - d).norm() < kSeparationFloor) {
        ok = false;
        break;
      }
    }
    if (ok) return d;
  }
  fail(Errc::invalid_spec, "could not draw a separated descriptor");
}

}  // namespace

double descriptor_separation_floor() { return kSeparationFloor; }

Vec3 Scene::patch_normal(int patch) const {
  const PatchSpec& p = spec.patches[patch];
  return p.u.cross(p.v).normalized();
}

Vec3 Scene::patch_point(int patch, const Vec2& uv) const {
  const PatchSpec& p = spec.patches[patch];
  return p.origin + uv.x() * p.u + uv.y() * p.v;
}

Scene generate_scene(const SceneSpec& spec) {
  if (spec.patches.empty()) fail(Errc::invalid_spec, "scene needs at least one patch");
  if (spec.descriptor_dim < 2) fail(Errc::invalid_spec, "descriptor dimension must be >= 2");
  for (const auto& p : spec.patches) {
    if (!(p.density > 0.0)) fail(Errc::invalid_spec, "patch density must be > 0");
    if (p.u.cross(p.v).norm() < 1e-12) fail(Errc::invalid_spec, "degenerate patch edge vectors");
  }

  Scene scene;
  scene.spec = spec;

  Rng pos_rng(mix_seed(spec.seed, kStreamLandmarks));
  Rng desc_rng(mix_seed(spec.seed, kStreamDescriptors));
  std::vector<Descriptor> all_descriptors;

  for (int pi = 0; pi < static_cast<int>(spec.patches.size()); ++pi) {
    const PatchSpec& patch = spec.patches[pi];
    const double area = patch.u.cross(patch.v).norm();
    const auto count = static_cast<std::int64_t>(std::llround(patch.density * area));
    for (std::int64_t k = 0; k < count; ++k) {
      SceneLandmark lm;
      lm.id = static_cast<std::int64_t>(scene.landmarks.size());
      lm.patch = pi;
      lm.patch_uv = Vec2(pos_rng.uniform(), pos_rng.uniform());
      lm.position = scene.patch_point(pi, lm.patch_uv);
      lm.descriptor = separated_descriptor(desc_rng, spec.descriptor_dim, all_descriptors);
      all_descriptors.push_back(lm.descriptor);
      scene.landmarks.push_back(std::move(lm));
    }
    if (!patch.roi_label.empty()) {
      ReferenceAppearance ref;
      ref.roi_label = patch.roi_label;
      ref.reference_size = spec.reference_size;
      for (const auto& lm : scene.landmarks) {
        if (lm.patch != pi) continue;
        Keypoint kp;
        kp.pixel = Vec2(lm.patch_uv.x() * spec.reference_size.x(),
                        lm.patch_uv.y() * spec.reference_size.y());
        kp.descriptor = lm.descriptor;
        kp.landmark_id = lm.id;
        ref.keypoints.push_back(std::move(kp));
      }
      if (static_cast<int>(ref.keypoints.size()) < spec.min_reference_keypoints)
        fail(Errc::invalid_spec, "labeled patch '" + patch.roi_label +
                                     "' yields too few reference keypoints; raise its density");
      scene.references.push_back(std::move(ref));
      scene.reference_patch.push_back(pi);
    }
  }
  return scene;
}

Pose trajectory_pose(const TrajectorySpec& traj, int frame_index) {
  if (traj.waypoints.size() < 2) fail(Errc::invalid_spec, "trajectory needs >= 2 waypoints");
  if (traj.frame_count < 1) fail(Errc::invalid_spec, "trajectory needs >= 1 frame");
  const int segments = static_cast<int>(traj.waypoints.size()) - 1;
  double s = traj.frame_count <= 1
                 ? 0.0
                 : static_cast<double>(frame_index) / (traj.frame_count - 1);
  s = std::clamp(s, 0.0, 1.0) * segments;
  int seg = std::min(static_cast<int>(s), segments - 1);
  const double f = s - seg;

  const Pose& a = traj.waypoints[seg];
  const Pose& b = traj.waypoints[seg + 1];
  Pose out;
  out.t = (1.0 - f) * a.t + f * b.t;
  const Eigen::Quaterniond qa(a.R);
  const Eigen::Quaterniond qb(b.R);
  out.R = qa.slerp(f, qb).toRotationMatrix();
  return out;
}

std::optional<Vec3> intersect_patches(const Scene& scene, const Ray& ray) {
  double best_t = std::numeric_limits<double>::infinity();
  std::optional<Vec3> best;
  for (int pi = 0; pi < static_cast<int>(scene.spec.patches.size()); ++pi) {
    const PatchSpec& p = scene.spec.patches[pi];
    const Vec3 n = scene.patch_normal(pi);
    const double denom = n.dot(ray.direction);
    if (std::abs(denom) < 1e-12) continue;
    const double t = n.dot(p.origin - ray.origin) / denom;
    if (t <= 1e-9 || t >= best_t) continue;
    const Vec3 hit = ray.origin + t * ray.direction;
    // Parameter coordinates via the patch edge basis.
    const Vec3 d = hit - p.origin;
    Eigen::Matrix<double, 3, 2> B;
    B.col(0) = p.u;
    B.col(1) = p.v;
    const Eigen::Vector2d uv = (B.transpose() * B).ldlt().solve(B.transpose() * d);
    if (uv.x() < 0.0 || uv.x() > 1.0 || uv.y() < 0.0 || uv.y() > 1.0) continue;
    best_t = t;
    best = hit;
  }
  return best;
}

DepthFrame render_frame(const Scene& scene, const Pose& pose, const CameraIntrinsics& intr,
                        const NoiseSpec& noise, int frame_index, bool with_depth) {
  Rng rng(mix_seed(scene.spec.seed, mix_seed(kStreamFrame, static_cast<std::uint64_t>(frame_index))));
  DepthFrame frame;
  frame.frame_index = frame_index;

  for (const auto& lm : scene.landmarks) {
    const Vec3 pc = pose.to_camera(lm.position);
    if (pc.z() <= 1e-9) continue;
    const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
    if (!intr.contains(px)) continue;
    if (scene.patch_normal(lm.patch).dot(pose.t - lm.position) <= 0.0) continue;

    if (noise.detection_dropout > 0.0 && rng.uniform() < noise.detection_dropout) continue;
    Vec2 noisy = px;
    if (noise.keypoint_px_sigma > 0.0) {
      noisy.x() += rng.gaussian(0.0, noise.keypoint_px_sigma);
      noisy.y() += rng.gaussian(0.0, noise.keypoint_px_sigma);
    }
    if (!intr.contains(noisy)) continue;

    Keypoint kp;
    kp.pixel = noisy;
    kp.descriptor = lm.descriptor;
    kp.landmark_id = lm.id;
    frame.keypoints.push_back(std::move(kp));

    if (with_depth) {
      double depth = pc.z();
      if (noise.depth_sigma_m > 0.0) depth += rng.gaussian(0.0, noise.depth_sigma_m);
      if (depth > 1e-3) frame.samples.push_back({noisy, depth});
    }
  }

  if (with_depth) {
    // Dense raster over the visible patches for occupancy integration.
    for (int y = scene.spec.depth_stride_px / 2; y < intr.height; y += scene.spec.depth_stride_px) {
      for (int x = scene.spec.depth_stride_px / 2; x < intr.width; x += scene.spec.depth_stride_px) {
        const Vec2 px(x, y);
        const Ray ray = pixel_to_ray(intr, pose, px);
        const auto hit = intersect_patches(scene, ray);
        if (!hit) continue;
        const Vec3 pc = pose.to_camera(*hit);
        if (pc.z() <= 1e-9) continue;
        double depth = pc.z();
        if (noise.depth_sigma_m > 0.0) depth += rng.gaussian(0.0, noise.depth_sigma_m);
        if (depth > 1e-3) frame.samples.push_back({px, depth});
      }
    }
  }
  return frame;
}

GeneratedSession generate_gaze_session(const Scene& scene, const TrajectorySpec& traj,
                                       const std::vector<GazeScriptEntry>& script,
                                       const NoiseSpec& noise) {
  if (script.empty()) fail(Errc::invalid_spec, "gaze script is empty");
  const CameraIntrinsics& intr = scene.spec.scene_intr;
  GeneratedSession out;

  auto target_at = [&](std::int64_t t_ms) -> Vec3 {
    if (t_ms <= script.front().t0_ms) return script.front().target;
    for (std::size_t i = 0; i < script.size(); ++i) {
      const auto& e = script[i];
      if (t_ms >= e.t0_ms && t_ms <= e.t1_ms) return e.target;
      if (i + 1 < script.size() && t_ms > e.t1_ms && t_ms < script[i + 1].t0_ms) {
        // Saccade: interpolate between fixation targets.
        const double f = static_cast<double>(t_ms - e.t1_ms) /
                         static_cast<double>(script[i + 1].t0_ms - e.t1_ms);
        return (1.0 - f) * e.target + f * script[i + 1].target;
      }
    }
    return script.back().target;
  };

  Rng rng(mix_seed(scene.spec.seed, kStreamGaze));
  const double sigma_px_u = intr.fx * std::tan(noise.gaze_deg_sigma * M_PI / 180.0);
  const double sigma_px_v = intr.fy * std::tan(noise.gaze_deg_sigma * M_PI / 180.0);

  for (int i = 0; i < traj.frame_count; ++i) {
    const Pose pose = trajectory_pose(traj, i);
    out.frame_poses.push_back(pose);
    const auto t_ms =
        static_cast<std::int64_t>(std::llround(1000.0 * i / traj.frame_rate_hz));
    const Vec3 target = target_at(t_ms);

    Vec2 px_true;
    try {
      px_true = project(intr, pose, target);
    } catch (const Error&) {
      fail(Errc::target_not_visible, "scripted target behind the camera at t=" +
                                         std::to_string(t_ms) + " ms");
    }
    if (!intr.contains(px_true))
      fail(Errc::target_not_visible,
           "scripted target projects outside the image at t=" + std::to_string(t_ms) + " ms");

    GazeSample sample;
    sample.t_ms = t_ms;
    sample.frame_index = i;
    sample.gaze_px = px_true;
    if (noise.gaze_deg_sigma > 0.0) {
      sample.gaze_px.x() += rng.gaussian(0.0, sigma_px_u);
      sample.gaze_px.y() += rng.gaussian(0.0, sigma_px_v);
    }
    sample.valid = intr.contains(sample.gaze_px);
    out.samples.push_back(sample);

    SampleTruth truth;
    truth.t_ms = t_ms;
    truth.frame_index = i;
    truth.gaze_px_true = px_true;
    truth.ray = Ray{pose.t, (target - pose.t).normalized()};
    truth.point = intersect_patches(scene, truth.ray);
    out.truth.push_back(truth);

    out.frame_keypoints[i] = render_frame(scene, pose, intr, noise, i, false).keypoints;
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

}  // namespace

EvalMetrics evaluate(const std::vector<GazePoint3D>& recovered,
                     const std::vector<SampleTruth>& truth) {
  if (recovered.size() != truth.size())
    fail(Errc::length_mismatch, "recovered and truth sample counts differ");
  EvalMetrics m;
  m.samples = static_cast<int>(recovered.size());

  std::vector<double> ang, dist;
  int localized = 0;
  for (std::size_t i = 0; i < recovered.size(); ++i) {
    const auto& r = recovered[i];
    if (r.frame_localized) ++localized;
    if (r.status != GazeStatus::Hit) continue;
    ++m.hits;
    ang.push_back(angular_error_deg(r.ray, truth[i].ray));
    if (truth[i].point) dist.push_back((r.point - *truth[i].point).norm());
  }
  m.median_angular_deg = median(ang);
  m.median_3d_m = median(dist);
  if (!ang.empty()) {
    double s = 0.0;
    for (double a : ang) s += a;
    m.mean_angular_deg = s / static_cast<double>(ang.size());
  }
  if (!dist.empty()) {
    double s = 0.0;
    for (double d : dist) s += d;
    m.mean_3d_m = s / static_cast<double>(dist.size());
  }
  if (m.samples > 0) {
    m.localized_pct = 100.0 * static_cast<double>(localized) / m.samples;
    m.hit_pct = 100.0 * static_cast<double>(m.hits) / m.samples;
  }
  return m;
}

}  // namespace gaze3d
