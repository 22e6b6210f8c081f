#include <doctest.h>

#include <cmath>

#include "gaze3d/semantic_rois.hpp"
#include "test_helpers.hpp"

using namespace gaze3d;
using namespace gaze3d::test;

namespace {

Vec2 apply(const Mat3& H, const Vec2& p) {
  const Vec3 q = H * Vec3(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

Mat3 sample_homography() {
  Mat3 H;
  H << 0.9, 0.12, 40.0,
       -0.08, 1.05, 22.0,
       1e-4, -6e-5, 1.0;
  return H;
}

Descriptor descriptor_at(Rng& rng, std::vector<Descriptor>& pool, double min_dist = 1.0) {
  for (;;) {
    Descriptor d(8);
    for (int i = 0; i < 8; ++i) d(i) = rng.gaussian() * 3.0;
    bool ok = true;
    for (const auto& e : pool)
      if ((e - d).norm() < min_dist) ok = false;
    if (!ok) continue;
    pool.push_back(d);
    return d;
  }
}

ReferenceAppearance make_reference(const std::string& label, Rng& rng,
                                   std::vector<Descriptor>& pool, int count = 30) {
  ReferenceAppearance ref;
  ref.roi_label = label;
  ref.reference_size = Vec2(200, 150);
  for (int i = 0; i < count; ++i) {
    Keypoint kp;
    kp.pixel = Vec2(rng.uniform(0, 200), rng.uniform(0, 150));
    kp.descriptor = descriptor_at(rng, pool);
    ref.keypoints.push_back(kp);
  }
  return ref;
}

std::vector<Keypoint> clutter(Rng& rng, std::vector<Descriptor>& pool, int count) {
  std::vector<Keypoint> kps;
  for (int i = 0; i < count; ++i) {
    Keypoint kp;
    kp.pixel = Vec2(rng.uniform(0, 640), rng.uniform(0, 480));
    kp.descriptor = descriptor_at(rng, pool);
    kps.push_back(kp);
  }
  return kps;
}

}  // namespace

TEST_CASE("homography_dlt_ransac: exact pairs recover H up to scale") {
  Rng rng(501);
  const Mat3 H = sample_homography();
  std::vector<std::pair<Vec2, Vec2>> pairs;
  for (int i = 0; i < 20; ++i) {
    const Vec2 p(rng.uniform(0, 200), rng.uniform(0, 150));
    pairs.emplace_back(p, apply(H, p));
  }
  const HomographyResult res = homography_dlt_ransac(pairs, 2.0, 7);
  CHECK(res.inlier_count == 20);
  const Mat3 diff = res.H / res.H(2, 2) - H / H(2, 2);
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("homography_dlt_ransac: identity pairs") {
  Rng rng(502);
  std::vector<std::pair<Vec2, Vec2>> pairs;
  for (int i = 0; i < 12; ++i) {
    const Vec2 p(rng.uniform(0, 100), rng.uniform(0, 100));
    pairs.emplace_back(p, p);
  }
  const HomographyResult res = homography_dlt_ransac(pairs, 1.0, 3);
  CHECK((res.H - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("homography_dlt_ransac: outliers rejected, random pairs refused") {
  Rng rng(503);
  const Mat3 H = sample_homography();
  std::vector<std::pair<Vec2, Vec2>> pairs;
  for (int i = 0; i < 25; ++i) {
    const Vec2 p(rng.uniform(0, 200), rng.uniform(0, 150));
    pairs.emplace_back(p, apply(H, p));
  }
  for (int i = 0; i < 8; ++i)
    pairs.emplace_back(Vec2(rng.uniform(0, 200), rng.uniform(0, 150)),
                       Vec2(rng.uniform(0, 640), rng.uniform(0, 480)));
  const HomographyResult res = homography_dlt_ransac(pairs, 2.0, 11);
  CHECK(res.inlier_count == 25);
  for (int i = 0; i < 25; ++i) CHECK(res.inlier_mask[i] == 1);

  std::vector<std::pair<Vec2, Vec2>> random_pairs;
  for (int i = 0; i < 20; ++i)
    random_pairs.emplace_back(Vec2(rng.uniform(0, 200), rng.uniform(0, 150)),
                              Vec2(rng.uniform(0, 640), rng.uniform(0, 480)));
  try {
    homography_dlt_ransac(random_pairs, 2.0, 13);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_consensus);
  }

  CHECK_THROWS_AS(homography_dlt_ransac({{Vec2(0, 0), Vec2(0, 0)}}, 2.0, 1), Error);
}

TEST_CASE("detect_roi: planted reference among clutter") {
  Rng rng(504);
  std::vector<Descriptor> pool;
  std::vector<ReferenceAppearance> refs;
  for (int i = 0; i < 3; ++i) refs.push_back(make_reference("logo_" + std::to_string(i), rng, pool));
  const ReferenceIndex index(refs, 3, 2, 99);

  const Mat3 H = sample_homography();
  std::vector<Keypoint> frame = clutter(rng, pool, 200);
  for (const auto& kp : refs[2].keypoints) {
    Keypoint moved = kp;
    moved.pixel = apply(H, kp.pixel);
    frame.push_back(moved);
  }

  RoiDetectConfig cfg;
  cfg.seed = 12;
  const auto detections = index.detect(frame, 0, cfg);
  REQUIRE(detections.size() == 1);
  CHECK(detections[0].roi_label == "logo_2");
  CHECK(detections[0].inlier_count >= 12);
  const std::array<Vec2, 4> corners = {Vec2(0, 0), Vec2(200, 0), Vec2(200, 150), Vec2(0, 150)};
  for (int i = 0; i < 4; ++i)
    CHECK((detections[0].corner_quad[i] - apply(H, corners[i])).norm() < 1.0);
}

TEST_CASE("detect_roi: clutter only, and two references in one frame") {
  Rng rng(505);
  std::vector<Descriptor> pool;
  std::vector<ReferenceAppearance> refs;
  for (int i = 0; i < 3; ++i) refs.push_back(make_reference("logo_" + std::to_string(i), rng, pool));
  const ReferenceIndex index(refs, 3, 2, 99);

  RoiDetectConfig cfg;
  cfg.seed = 12;
  CHECK(index.detect(clutter(rng, pool, 200), 0, cfg).empty());

  // two references placed side by side
  Mat3 A = Mat3::Identity();
  A(0, 0) = 0.8;
  A(1, 1) = 0.8;
  A(0, 2) = 30;
  A(1, 2) = 60;
  Mat3 B = Mat3::Identity();
  B(0, 0) = 0.9;
  B(1, 1) = 0.85;
  B(0, 2) = 380;
  B(1, 2) = 100;
  std::vector<Keypoint> frame = clutter(rng, pool, 80);
  for (const auto& kp : refs[0].keypoints) {
    Keypoint moved = kp;
    moved.pixel = apply(A, kp.pixel);
    frame.push_back(moved);
  }
  for (const auto& kp : refs[1].keypoints) {
    Keypoint moved = kp;
    moved.pixel = apply(B, kp.pixel);
    frame.push_back(moved);
  }
  const auto detections = index.detect(frame, 3, cfg);
  REQUIRE(detections.size() == 2);
  CHECK(detections[0].roi_label == "logo_0");
  CHECK(detections[1].roi_label == "logo_1");
}

TEST_CASE("detect_roi: fuzzed clutter produces no false detections") {
  Rng rng(506);
  std::vector<Descriptor> pool;
  std::vector<ReferenceAppearance> refs;
  for (int i = 0; i < 4; ++i) refs.push_back(make_reference("logo_" + std::to_string(i), rng, pool));
  const ReferenceIndex index(refs, 3, 2, 42);
  RoiDetectConfig cfg;
  cfg.seed = 5;
  int detections = 0;
  for (int f = 0; f < 100; ++f) {
    std::vector<Descriptor> local;  // clutter may repeat across frames
    const auto frame = clutter(rng, local, 150);
    detections += static_cast<int>(index.detect(frame, f, cfg).size());
  }
  CHECK(detections == 0);
}

TEST_CASE("lift_roi: wall-plane detection lifts to a planar quad") {
  // occupancy wall: one voxel layer at z in [2.0, 2.02)
  OccupancyGrid grid(Vec3(-1.8, -1.3, -0.1), 0.02, {180, 130, 110});
  const int wall_z = 105;
  for (int iy = 0; iy < 130; ++iy)
    for (int ix = 0; ix < 180; ++ix)
      grid.values()[grid.linear_index(ix, iy, wall_z)] = 2.0f;

  CameraIntrinsics intr = test_intrinsics();
  RoiDetection det;
  det.roi_label = "logo";
  det.frame_index = 0;
  det.inlier_count = 20;
  det.corner_quad = {Vec2(250, 200), Vec2(390, 205), Vec2(385, 300), Vec2(255, 295)};

  Pose cam;  // at the origin looking at the wall
  const auto roi = lift_roi(det, cam, intr, grid, 10.0, 0.02);
  REQUIRE(roi.has_value());
  CHECK(roi->roi_label == "logo");
  // all corners on the wall's entry plane z = 2.0
  for (const auto& p : roi->polygon) CHECK(p.z() == doctest::Approx(2.0).epsilon(1e-9));
  // normal points back toward the camera
  CHECK(roi->normal.dot(cam.t - roi->polygon[0]) > 0.0);

  // a corner ray that misses the grid: no ROI
  RoiDetection off = det;
  off.corner_quad[0] = Vec2(1, 1);  // grazes past the wall edge
  Pose side;
  side.t = Vec3(0, 0, 1.9);
  side.R = rotation_exp(Vec3(0, -1.2, 0));  // mostly sideways
  CHECK_FALSE(lift_roi(off, side, intr, grid, 2.0, 0.02).has_value());
}

TEST_CASE("lift_roi: non-coplanar corner hits are rejected") {
  OccupancyGrid grid(Vec3(-1, -1, 0), 0.05, {40, 40, 40});
  // two wall segments at different depths; corners will straddle them
  for (int iy = 0; iy < 40; ++iy)
    for (int ix = 0; ix < 20; ++ix) grid.values()[grid.linear_index(ix, iy, 20)] = 2.0f;
  for (int iy = 0; iy < 40; ++iy)
    for (int ix = 20; ix < 40; ++ix) grid.values()[grid.linear_index(ix, iy, 30)] = 2.0f;

  CameraIntrinsics intr = test_intrinsics();
  RoiDetection det;
  det.roi_label = "split";
  det.corner_quad = {Vec2(200, 200), Vec2(260, 200), Vec2(440, 260), Vec2(200, 300)};
  CHECK_FALSE(lift_roi(det, Pose{}, intr, grid, 10.0, 0.02).has_value());
}

TEST_CASE("merge_rois: clustering, averaging, idempotence") {
  auto quad_at = [](double cx, double cy, double z) {
    ROI3D roi;
    roi.roi_label = "a";
    roi.polygon = {Vec3(cx - 0.2, cy - 0.15, z), Vec3(cx + 0.2, cy - 0.15, z),
                   Vec3(cx + 0.2, cy + 0.15, z), Vec3(cx - 0.2, cy + 0.15, z)};
    roi.normal = Vec3(0, 0, -1);
    return roi;
  };

  SUBCASE("two nearby detections merge to corner midpoints") {
    const auto merged = merge_rois({quad_at(0, 0, 2.0), quad_at(0.02, 0, 2.0)});
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].support_count == 2);
    CHECK(merged[0].polygon[0].x() == doctest::Approx(-0.19).epsilon(1e-9));
  }

  SUBCASE("distant same-label detections stay separate") {
    const auto merged = merge_rois({quad_at(0, 0, 2.0), quad_at(1.0, 0, 2.0)});
    CHECK(merged.size() == 2);
  }

  SUBCASE("empty input") { CHECK(merge_rois({}).empty()); }

  SUBCASE("idempotent") {
    std::vector<ROI3D> input = {quad_at(0, 0, 2.0), quad_at(0.02, 0, 2.0), quad_at(1, 0, 2.0)};
    auto b = quad_at(0.5, 0.8, 1.5);
    b.roi_label = "b";
    input.push_back(b);
    const auto once = merge_rois(input);
    const auto twice = merge_rois(once);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(once[i].roi_label == twice[i].roi_label);
      CHECK(once[i].support_count == twice[i].support_count);
      for (int c = 0; c < 4; ++c) CHECK((once[i].polygon[c] - twice[i].polygon[c]).norm() < 1e-12);
    }
  }

  SUBCASE("cyclically rotated corners are aligned before averaging") {
    ROI3D rotated = quad_at(0.01, 0, 2.0);
    std::rotate(rotated.polygon.begin(), rotated.polygon.begin() + 2, rotated.polygon.end());
    const auto merged = merge_rois({quad_at(0, 0, 2.0), rotated});
    REQUIRE(merged.size() == 1);
    // averaging happened corner-to-nearest-corner, so the quad stays a box
    CHECK(merged[0].polygon[0].x() == doctest::Approx(-0.195).epsilon(1e-9));
    CHECK(merged[0].polygon[0].y() == doctest::Approx(-0.15).epsilon(1e-9));
  }
}

TEST_CASE("quad helpers") {
  const std::array<Vec2, 4> box = {Vec2(0, 0), Vec2(2, 0), Vec2(2, 1), Vec2(0, 1)};
  CHECK(quad_convex(box));
  CHECK(quad_area(box) == doctest::Approx(2.0));
  const std::array<Vec2, 4> bowtie = {Vec2(0, 0), Vec2(2, 1), Vec2(2, 0), Vec2(0, 1)};
  CHECK_FALSE(quad_convex(bowtie));
}
