#include <doctest.h>

#include <cmath>

#include "gaze3d/sim.hpp"
#include "test_helpers.hpp"

using namespace gaze3d;
using namespace gaze3d::test;

namespace {

SceneSpec small_scene_spec(std::uint64_t seed = 5) {
  SceneSpec spec;
  spec.seed = seed;
  spec.descriptor_dim = 16;
  spec.grid = {Vec3(-2, -2, -0.5), 0.05, {80, 80, 60}};
  spec.scene_intr = {850, 850, 640, 480, 1280, 960};
  spec.rgbd_intr = {600, 600, 320, 240, 640, 480};
  PatchSpec wall;
  wall.origin = Vec3(-1.5, -1.0, 2.003);
  wall.u = Vec3(0, 2, 0);
  wall.v = Vec3(3, 0, 0);
  wall.density = 30;
  spec.patches.push_back(wall);

  TrajectorySpec traj;
  traj.waypoints = {Pose::identity(), Pose::identity()};
  traj.waypoints[1].t = Vec3(0.2, 0, 0.2);
  traj.frame_count = 10;
  traj.frame_rate_hz = 30;
  spec.mapping_trajectory = traj;
  spec.gaze_trajectory = traj;
  spec.gaze_script = {{0, 1000, Vec3(0, 0, 2.003)}};
  return spec;
}

}  // namespace

TEST_CASE("generate_scene: landmark count arithmetic and determinism") {
  SceneSpec spec = small_scene_spec();
  PatchSpec patch;
  patch.origin = Vec3(-1, -1, 2.0);
  patch.u = Vec3(0, 2, 0);
  patch.v = Vec3(2, 0, 0);
  patch.density = 25;
  spec.patches = {patch};
  const Scene scene = generate_scene(spec);
  CHECK(scene.landmarks.size() == 100);  // 4 m^2 * 25 / m^2

  const Scene again = generate_scene(spec);
  REQUIRE(scene.landmarks.size() == again.landmarks.size());
  for (std::size_t i = 0; i < scene.landmarks.size(); ++i) {
    CHECK((scene.landmarks[i].position - again.landmarks[i].position).norm() == 0.0);
    CHECK((scene.landmarks[i].descriptor - again.landmarks[i].descriptor).norm() == 0.0);
  }
}

TEST_CASE("generate_scene: descriptor separation floor holds exhaustively") {
  SceneSpec spec = small_scene_spec(11);
  PatchSpec big;
  big.origin = Vec3(-10, -10, 3.0);
  big.u = Vec3(0, 20, 0);
  big.v = Vec3(20, 0, 0);
  big.density = 25;  // 400 m^2 * 25 = 10000 landmarks
  spec.patches = {big};
  const Scene scene = generate_scene(spec);
  REQUIRE(scene.landmarks.size() == 10000);
  const double floor_dist = descriptor_separation_floor();
  double min_dist = 1e300;
  for (std::size_t i = 0; i < scene.landmarks.size(); ++i)
    for (std::size_t j = i + 1; j < scene.landmarks.size(); ++j)
      min_dist = std::min(min_dist,
                          (scene.landmarks[i].descriptor - scene.landmarks[j].descriptor).norm());
  CHECK(min_dist >= floor_dist);
}

TEST_CASE("generate_scene: labeled patches become references") {
  SceneSpec spec = small_scene_spec();
  PatchSpec logo;
  logo.origin = Vec3(-0.2, -0.15, 2.001);
  logo.u = Vec3(0, 0.3, 0);
  logo.v = Vec3(0.4, 0, 0);
  logo.density = 300;
  logo.roi_label = "logo_x";
  spec.patches.push_back(logo);
  const Scene scene = generate_scene(spec);
  REQUIRE(scene.references.size() == 1);
  CHECK(scene.references[0].roi_label == "logo_x");
  CHECK(scene.references[0].keypoints.size() >= 8);
  // reference pixels live in the declared reference image size
  for (const auto& kp : scene.references[0].keypoints) {
    CHECK(kp.pixel.x() >= 0.0);
    CHECK(kp.pixel.x() <= spec.reference_size.x());
    CHECK(kp.pixel.y() >= 0.0);
    CHECK(kp.pixel.y() <= spec.reference_size.y());
  }
}

TEST_CASE("render_frame: noise-free keypoints project exactly") {
  const SceneSpec spec = small_scene_spec();
  const Scene scene = generate_scene(spec);
  NoiseSpec zero;
  zero.keypoint_px_sigma = 0.0;
  zero.depth_sigma_m = 0.0;
  zero.detection_dropout = 0.0;
  const DepthFrame frame = render_frame(scene, Pose::identity(), spec.rgbd_intr, zero, 0);
  REQUIRE(!frame.keypoints.empty());
  for (const auto& kp : frame.keypoints) {
    const auto& lm = scene.landmarks[kp.landmark_id];
    const Vec2 expected = project(spec.rgbd_intr, Pose::identity(), lm.position);
    CHECK((kp.pixel - expected).norm() < 1e-12);
    CHECK((kp.descriptor - lm.descriptor).norm() == 0.0);
  }

  NoiseSpec drop = zero;
  drop.detection_dropout = 1.0;
  CHECK(render_frame(scene, Pose::identity(), spec.rgbd_intr, drop, 0).keypoints.empty());
}

TEST_CASE("render_frame: pixel noise magnitude matches the half-normal mean") {
  const SceneSpec spec = small_scene_spec(21);
  const Scene scene = generate_scene(spec);
  NoiseSpec noise;
  noise.keypoint_px_sigma = 0.5;
  noise.depth_sigma_m = 0.0;

  double total = 0.0;
  int count = 0;
  for (int f = 0; f < 100 && count < 10000; ++f) {
    const DepthFrame frame = render_frame(scene, Pose::identity(), spec.rgbd_intr, noise, f);
    for (const auto& kp : frame.keypoints) {
      const Vec2 expected =
          project(spec.rgbd_intr, Pose::identity(), scene.landmarks[kp.landmark_id].position);
      total += (kp.pixel - expected).norm();
      ++count;
    }
  }
  REQUIRE(count >= 5000);
  const double mean = total / count;
  CHECK(mean == doctest::Approx(0.5 * std::sqrt(M_PI / 2.0)).epsilon(0.05));
}

TEST_CASE("trajectory_pose: endpoints and midpoint") {
  TrajectorySpec traj;
  traj.waypoints = {Pose::identity(), Pose::identity()};
  traj.waypoints[1].t = Vec3(1, 0, 0);
  traj.waypoints[1].R = rotation_exp(Vec3(0, 0.4, 0));
  traj.frame_count = 11;
  traj.frame_rate_hz = 30;
  CHECK((trajectory_pose(traj, 0).t - Vec3(0, 0, 0)).norm() < 1e-12);
  CHECK((trajectory_pose(traj, 10).t - Vec3(1, 0, 0)).norm() < 1e-12);
  const Pose mid = trajectory_pose(traj, 5);
  CHECK(mid.t.x() == doctest::Approx(0.5));
  CHECK(rotation_angle(mid.R) == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("generate_gaze_session: noise-free samples sit on the target projection") {
  SceneSpec spec = small_scene_spec();
  spec.noise.gaze_deg_sigma = 0.0;
  spec.noise.keypoint_px_sigma = 0.0;
  TrajectorySpec still;
  still.waypoints = {Pose::identity(), Pose::identity()};
  still.frame_count = 10;
  still.frame_rate_hz = 30;
  const Scene scene = generate_scene(spec);
  const GeneratedSession session =
      generate_gaze_session(scene, still, {{0, 1000, Vec3(0.1, 0, 2.003)}}, spec.noise);
  REQUIRE(session.samples.size() == 10);
  const Vec2 expected = project(spec.scene_intr, Pose::identity(), Vec3(0.1, 0, 2.003));
  for (const auto& s : session.samples) {
    CHECK(s.valid);
    CHECK((s.gaze_px - expected).norm() < 1e-12);
  }
  // exact truth: ray through the target, intersection on the wall plane
  for (const auto& t : session.truth) {
    REQUIRE(t.point.has_value());
    CHECK(t.point->z() == doctest::Approx(2.003).epsilon(1e-12));
    CHECK((t.point.value() - Vec3(0.1, 0, 2.003)).norm() < 1e-9);
  }
}

TEST_CASE("generate_gaze_session: angular noise converts through the focal length") {
  SceneSpec spec = small_scene_spec(33);
  spec.noise.gaze_deg_sigma = 0.5;
  TrajectorySpec still;
  still.waypoints = {Pose::identity(), Pose::identity()};
  still.frame_count = 3000;
  still.frame_rate_hz = 30;
  const Scene scene = generate_scene(spec);
  const GeneratedSession session =
      generate_gaze_session(scene, still, {{0, 100000, Vec3(0, 0, 2.003)}}, spec.noise);
  const Vec2 expected = project(spec.scene_intr, Pose::identity(), Vec3(0, 0, 2.003));
  double sum2 = 0.0;
  for (const auto& s : session.samples) sum2 += (s.gaze_px.x() - expected.x()) * (s.gaze_px.x() - expected.x());
  const double sigma = std::sqrt(sum2 / session.samples.size());
  CHECK(sigma == doctest::Approx(850.0 * std::tan(0.5 * M_PI / 180.0)).epsilon(0.05));
}

TEST_CASE("generate_gaze_session: scripted fixations appear in the ground truth") {
  SceneSpec spec = small_scene_spec();
  spec.noise.gaze_deg_sigma = 0.0;
  TrajectorySpec still;
  still.waypoints = {Pose::identity(), Pose::identity()};
  still.frame_count = 60;
  still.frame_rate_hz = 30;
  const Scene scene = generate_scene(spec);
  const std::vector<GazeScriptEntry> script = {{0, 900, Vec3(-0.4, 0, 2.003)},
                                               {1000, 1966, Vec3(0.4, 0.2, 2.003)}};
  const GeneratedSession session = generate_gaze_session(scene, still, script, spec.noise);
  for (const auto& t : session.truth) {
    if (t.t_ms <= 900) {
      CHECK((*t.point - Vec3(-0.4, 0, 2.003)).norm() < 1e-9);
    } else if (t.t_ms >= 1000) {
      CHECK((*t.point - Vec3(0.4, 0.2, 2.003)).norm() < 1e-9);
    }
  }
}

TEST_CASE("generate_gaze_session: invisible target fails") {
  SceneSpec spec = small_scene_spec();
  TrajectorySpec still;
  still.waypoints = {Pose::identity(), Pose::identity()};
  still.frame_count = 5;
  still.frame_rate_hz = 30;
  const Scene scene = generate_scene(spec);
  try {
    generate_gaze_session(scene, still, {{0, 1000, Vec3(0, 0, -1)}}, spec.noise);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::target_not_visible);
  }
}

TEST_CASE("evaluate: zero error on identical input, exact offsets, mismatch") {
  std::vector<GazePoint3D> recovered;
  std::vector<SampleTruth> truth;
  for (int i = 0; i < 20; ++i) {
    SampleTruth t;
    t.t_ms = i * 33;
    t.ray = {Vec3::Zero(), Vec3(0, 0, 1)};
    t.point = Vec3(0, 0, 2);
    truth.push_back(t);

    GazePoint3D p;
    p.t_ms = t.t_ms;
    p.status = GazeStatus::Hit;
    p.ray = t.ray;
    p.has_ray = true;
    p.point = *t.point;
    p.frame_localized = true;
    recovered.push_back(p);
  }
  const EvalMetrics zero = evaluate(recovered, truth);
  CHECK(zero.median_angular_deg == doctest::Approx(0.0));
  CHECK(zero.median_3d_m == doctest::Approx(0.0));
  CHECK(zero.localized_pct == doctest::Approx(100.0));
  CHECK(zero.hit_pct == doctest::Approx(100.0));

  // rays offset by exactly 1 degree everywhere
  for (auto& p : recovered) p.ray.direction = Vec3(std::tan(M_PI / 180.0), 0, 1).normalized();
  const EvalMetrics one = evaluate(recovered, truth);
  CHECK(one.median_angular_deg == doctest::Approx(1.0).epsilon(1e-9));

  truth.pop_back();
  CHECK_THROWS_AS(evaluate(recovered, truth), Error);
}

TEST_CASE("evaluate: non-hit samples count in rates but not errors") {
  std::vector<GazePoint3D> recovered;
  std::vector<SampleTruth> truth(4);
  for (int i = 0; i < 4; ++i) {
    truth[i].ray = {Vec3::Zero(), Vec3(0, 0, 1)};
    truth[i].point = Vec3(0, 0, 2);
    GazePoint3D p;
    p.t_ms = i;
    p.frame_localized = i < 3;
    p.status = i < 2 ? GazeStatus::Hit : (i == 2 ? GazeStatus::Miss : GazeStatus::FrameLost);
    if (i < 2) {
      p.ray = truth[i].ray;
      p.has_ray = true;
      p.point = *truth[i].point;
    }
    recovered.push_back(p);
  }
  const EvalMetrics m = evaluate(recovered, truth);
  CHECK(m.hits == 2);
  CHECK(m.samples == 4);
  CHECK(m.hit_pct == doctest::Approx(50.0));
  CHECK(m.localized_pct == doctest::Approx(75.0));
}

TEST_CASE("sim determinism: identical sessions from one seed") {
  const SceneSpec spec = small_scene_spec(44);
  const Scene scene = generate_scene(spec);
  const GeneratedSession a =
      generate_gaze_session(scene, spec.gaze_trajectory, spec.gaze_script, spec.noise);
  const GeneratedSession b =
      generate_gaze_session(scene, spec.gaze_trajectory, spec.gaze_script, spec.noise);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].gaze_px == b.samples[i].gaze_px);
    CHECK(a.samples[i].valid == b.samples[i].valid);
  }
  for (const auto& [frame, kps] : a.frame_keypoints) {
    const auto& other = b.frame_keypoints.at(frame);
    REQUIRE(kps.size() == other.size());
    for (std::size_t i = 0; i < kps.size(); ++i)
      CHECK((kps[i].pixel - other[i].pixel).norm() == 0.0);
  }
}
