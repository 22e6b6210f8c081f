#include <doctest.h>

#include <cmath>

#include "gaze3d/geometry.hpp"
#include "test_helpers.hpp"

using namespace gaze3d;
using gaze3d::test::rand_pose;
using gaze3d::test::rand_unit;
using gaze3d::test::test_intrinsics;

namespace {
const CameraIntrinsics kIntr = test_intrinsics();
}

TEST_CASE("project: optical axis and closed-form pinhole") {
  const Pose id = Pose::identity();
  const Vec2 c = project(kIntr, id, Vec3(0, 0, 1));
  CHECK(c.x() == doctest::Approx(320).epsilon(1e-12));
  CHECK(c.y() == doctest::Approx(240).epsilon(1e-12));

  const Vec2 off = project(kIntr, id, Vec3(0.5, 0, 1));
  CHECK(off.x() == doctest::Approx(620).epsilon(1e-12));
  CHECK(off.y() == doctest::Approx(240).epsilon(1e-12));

  CHECK_THROWS_AS(project(kIntr, id, Vec3(0, 0, -1)), Error);
  try {
    project(kIntr, id, Vec3(0, 0, -1));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::behind_camera);
  }
}

TEST_CASE("backproject: examples and round trip") {
  const Vec3 p = backproject(kIntr, Vec2(320, 240), 2.0);
  CHECK((p - Vec3(0, 0, 2)).norm() < 1e-12);
  const Vec3 q = backproject(kIntr, Vec2(620, 240), 1.0);
  CHECK((q - Vec3(0.5, 0, 1)).norm() < 1e-12);
  CHECK_THROWS_AS(backproject(kIntr, Vec2(320, 240), 0.0), Error);

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const Vec2 px(rng.uniform(0, 640), rng.uniform(0, 480));
    const double d = rng.uniform(0.1, 10.0);
    const Vec2 rt = project(kIntr, Pose::identity(), backproject(kIntr, px, d));
    CHECK((rt - px).norm() < 1e-9);
  }
}

TEST_CASE("compose and invert form a group") {
  const Pose id = Pose::identity();
  const Pose cc = compose(id, id);
  CHECK((cc.R - Mat3::Identity()).norm() < 1e-15);
  CHECK(cc.t.norm() < 1e-15);

  Pose tr;
  tr.t = Vec3(1, 2, 3);
  const Pose inv = invert(tr);
  CHECK((inv.t - Vec3(-1, -2, -3)).norm() < 1e-15);

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Pose p = rand_pose(rng);
    const Pose r = compose(p, invert(p));
    CHECK((r.R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.t.cwiseAbs().maxCoeff() < 1e-9);

    const Pose a = rand_pose(rng), b = rand_pose(rng), c = rand_pose(rng);
    const Pose lhs = compose(compose(a, b), c);
    const Pose rhs = compose(a, compose(b, c));
    CHECK((lhs.R - rhs.R).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((lhs.t - rhs.t).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rotation exp/log: examples, round trip, invariants") {
  const Mat3 r90 = rotation_exp(Vec3(0, 0, M_PI / 2));
  CHECK((r90 * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-12);
  CHECK((rotation_exp(Vec3::Zero()) - Mat3::Identity()).norm() < 1e-15);

  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w = rand_unit(rng) * rng.uniform(1e-6, M_PI - 1e-6);
    const Vec3 back = rotation_log(rotation_exp(w));
    CHECK((back - w).norm() < 1e-9);
  }
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = rand_unit(rng) * rng.uniform(0.0, M_PI);
    CHECK(is_rotation(rotation_exp(w)));
  }
  // branch points
  CHECK((rotation_log(rotation_exp(Vec3(1e-10, 0, 0))) - Vec3(1e-10, 0, 0)).norm() < 1e-15);
  const Vec3 near_pi = Vec3(0, 1, 0) * (M_PI - 1e-9);
  const Mat3 R = rotation_exp(near_pi);
  CHECK((rotation_exp(rotation_log(R)) - R).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pixel_to_ray examples") {
  const Pose id = Pose::identity();
  const Ray r0 = pixel_to_ray(kIntr, id, Vec2(320, 240));
  CHECK(r0.origin.norm() < 1e-15);
  CHECK((r0.direction - Vec3(0, 0, 1)).norm() < 1e-12);

  const Ray r1 = pixel_to_ray(kIntr, id, Vec2(620, 240));
  CHECK((r1.direction - Vec3(0.5, 0, 1).normalized()).norm() < 1e-12);

  CHECK_THROWS_AS(pixel_to_ray(kIntr, id, Vec2(-1, 0)), Error);
}

TEST_CASE("angular_error: examples and sphere properties") {
  CHECK(angular_error_deg(Vec3(0, 0, 1), Vec3(0, 0, 1)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(angular_error_deg(Vec3(1, 0, 0), Vec3(0, 1, 0)) == doctest::Approx(90.0).epsilon(1e-12));
  const double expected = std::atan(0.0105) * 180.0 / M_PI;
  CHECK(angular_error_deg(Vec3(0, 0, 1), Vec3(0.0105, 0, 1).normalized()) ==
        doctest::Approx(expected).epsilon(1e-9));
  CHECK_THROWS_AS(angular_error_deg(Vec3::Zero(), Vec3(0, 0, 1)), Error);

  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a = rand_unit(rng), b = rand_unit(rng), c = rand_unit(rng);
    CHECK(angular_error_deg(a, b) == doctest::Approx(angular_error_deg(b, a)).epsilon(1e-12));
    CHECK(angular_error_deg(a, c) <= angular_error_deg(a, b) + angular_error_deg(b, c) + 1e-9);
  }
}

TEST_CASE("make_frustum: corners, range check, opening angle") {
  const Pose id = Pose::identity();
  const Frustum f = make_frustum(id, kIntr, 0.1, 10.0);
  CHECK((f.corner_dirs[0] - Vec3(-320.0 / 600, -240.0 / 600, 1).normalized()).norm() < 1e-12);
  CHECK_THROWS_AS(make_frustum(id, kIntr, 1.0, 0.5), Error);

  const Ray left = pixel_to_ray(kIntr, id, Vec2(0, 240));
  const Ray right = pixel_to_ray(kIntr, id, Vec2(640, 240));
  const double full = 2.0 * std::atan(320.0 / 600.0) * 180.0 / M_PI;
  CHECK(angular_error_deg(left, right) == doctest::Approx(full).epsilon(1e-9));
}

TEST_CASE("pose serialization: canonical quaternion, round trip") {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const Pose p = rand_pose(rng);
    const auto a = pose_to_array(p);
    CHECK(a[0] >= 0.0);  // canonical sign
    const Pose q = pose_from_array(a);
    CHECK((p.R - q.R).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.t - q.t).norm() < 1e-15);
    // A second conversion pass is exactly stable.
    const auto b = pose_to_array(pose_from_array(a));
    const Pose r = pose_from_array(b);
    CHECK((q.R - r.R).cwiseAbs().maxCoeff() < 1e-14);
  }
}
