#include <doctest.h>

#include <cmath>

#include "gaze3d/attention.hpp"
#include "test_helpers.hpp"

using namespace gaze3d;
using namespace gaze3d::test;

namespace {

GazePoint3D hit_sample(std::int64_t t_ms, const Vec3& dir, const Vec3& point) {
  GazePoint3D p;
  p.t_ms = t_ms;
  p.status = GazeStatus::Hit;
  p.ray = {Vec3::Zero(), dir.normalized()};
  p.has_ray = true;
  p.point = point;
  p.frame_localized = true;
  return p;
}

GazePoint3D miss_sample(std::int64_t t_ms) {
  GazePoint3D p;
  p.t_ms = t_ms;
  p.status = GazeStatus::Miss;
  p.has_ray = true;
  p.ray = {Vec3::Zero(), Vec3::UnitZ()};
  p.frame_localized = true;
  return p;
}

/// Axis-aligned square ROI on the z = z0 plane, centered at (cx, cy).
ROI3D square_roi(const std::string& label, double cx, double cy, double half, double z0) {
  ROI3D roi;
  roi.roi_label = label;
  roi.polygon = {Vec3(cx - half, cy - half, z0), Vec3(cx + half, cy - half, z0),
                 Vec3(cx + half, cy + half, z0), Vec3(cx - half, cy + half, z0)};
  roi.normal = Vec3(0, 0, -1);
  return roi;
}

Vec3 dir_with_angle_deg(double deg, double phase) {
  const double r = std::tan(deg * M_PI / 180.0);
  return Vec3(r * std::cos(phase), r * std::sin(phase), 1.0).normalized();
}

/// Scripted session: fixations separated by large saccades, 30 Hz.
struct ScriptedSession {
  std::vector<GazePoint3D> points;
  std::vector<std::pair<int, int>> fixation_ranges;  // sample index [first, last]
};

ScriptedSession scripted_session() {
  ScriptedSession s;
  const std::vector<double> azimuths = {0, 10, 20, 5, 15};  // 5 targets, >=5 deg apart
  const std::vector<int> lengths = {9, 12, 7, 10, 8};       // samples per fixation (>= 200 ms)
  std::int64_t t = 0;
  int idx = 0;
  for (std::size_t f = 0; f < azimuths.size(); ++f) {
    const int first = idx;
    for (int i = 0; i < lengths[f]; ++i) {
      Vec3 dir(std::tan(azimuths[f] * M_PI / 180.0) + 0.0005 * std::cos(i),
               0.0005 * std::sin(i), 1.0);  // ~0.03 deg jitter around the target
      dir.normalize();
      s.points.push_back(hit_sample(t, dir, Vec3(azimuths[f], 0, 2)));
      t += 33;
      ++idx;
    }
    s.fixation_ranges.emplace_back(first, idx - 1);
    // two saccade samples far away from everything else
    for (int k = 0; k < 2 && f + 1 < azimuths.size(); ++k) {
      s.points.push_back(hit_sample(t, dir_with_angle_deg(45 + 20 * k + 17 * f, 1.0),
                                    Vec3(50, 50, 2)));
      t += 33;
      ++idx;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("detect_fixations: single steady window") {
  std::vector<GazePoint3D> pts;
  for (int i = 0; i <= 9; ++i) pts.push_back(hit_sample(i * 33 + (i + 1) / 3, Vec3(0, 0, 1), Vec3(0, 0, 2)));
  // timestamps 0..300 ms
  pts.back().t_ms = 300;
  pts.front().t_ms = 0;
  const auto fixations = detect_fixations(pts, 1.0, 100);
  REQUIRE(fixations.size() == 1);
  CHECK(fixations[0].start_ms == 0);
  CHECK(fixations[0].duration_ms == 300);
  CHECK((fixations[0].centroid_3d - Vec3(0, 0, 2)).norm() < 1e-12);
  CHECK(fixations[0].first_sample == 0);
  CHECK(fixations[0].last_sample == 9);
}

TEST_CASE("detect_fixations: too short window") {
  std::vector<GazePoint3D> pts = {hit_sample(0, Vec3(0, 0, 1), Vec3(0, 0, 2)),
                                  hit_sample(33, Vec3(0, 0, 1), Vec3(0, 0, 2))};
  CHECK(detect_fixations(pts, 1.0, 100).empty());
}

TEST_CASE("detect_fixations: scripted schedule recovered") {
  const ScriptedSession s = scripted_session();
  const auto fixations = detect_fixations(s.points, 2.0, 100);
  REQUIRE(fixations.size() == s.fixation_ranges.size());
  for (std::size_t f = 0; f < fixations.size(); ++f) {
    CHECK(std::abs(fixations[f].first_sample - s.fixation_ranges[f].first) <= 1);
    CHECK(std::abs(fixations[f].last_sample - s.fixation_ranges[f].second) <= 1);
  }
  // no sample belongs to two fixations
  for (std::size_t f = 1; f < fixations.size(); ++f)
    CHECK(fixations[f].first_sample > fixations[f - 1].last_sample);
}

TEST_CASE("detect_fixations: non-hit samples break windows") {
  std::vector<GazePoint3D> pts;
  for (int i = 0; i < 6; ++i) pts.push_back(hit_sample(i * 33, Vec3(0, 0, 1), Vec3(0, 0, 2)));
  pts.push_back(miss_sample(6 * 33));
  for (int i = 7; i < 13; ++i) pts.push_back(hit_sample(i * 33, Vec3(0, 0, 1), Vec3(0, 0, 2)));
  const auto fixations = detect_fixations(pts, 1.0, 100);
  CHECK(fixations.size() == 2);
}

TEST_CASE("aoi_assign and aoi_hits: geometry cases") {
  const std::vector<ROI3D> rois = {square_roi("a", 0, 0, 0.2, 2.0)};
  CHECK(aoi_assign(Vec3(0, 0, 2.0), rois) == 0);           // centroid, on plane
  CHECK(aoi_assign(Vec3(0.2, 0.2, 2.0), rois) == 0);       // corner, boundary inclusive
  CHECK(aoi_assign(Vec3(0, 0, 2.05), rois, 0.02) == -1);   // 5 cm off plane
  CHECK(aoi_assign(Vec3(0.3, 0, 2.0), rois) == -1);        // outside polygon

  // overlapping ROIs: nearest plane wins, ties by label
  std::vector<ROI3D> overlap = {square_roi("b", 0, 0, 0.2, 2.010), square_roi("a", 0, 0, 0.2, 2.012)};
  CHECK(aoi_assign(Vec3(0, 0, 2.0095), overlap, 0.02) == 0);  // closer plane (b)
  std::vector<ROI3D> tied = {square_roi("b", 0, 0, 0.2, 2.0), square_roi("a", 0, 0, 0.2, 2.0)};
  CHECK(aoi_assign(Vec3(0, 0, 2.0), tied) == 1);  // same distance, label "a" wins
}

TEST_CASE("aoi_hits: brute-force oracle agreement over seeded points") {
  Rng rng(401);
  std::vector<ROI3D> rois;
  rois.push_back(square_roi("alpha", -0.4, 0.1, 0.25, 2.0));
  rois.push_back(square_roi("beta", 0.5, -0.2, 0.3, 2.004));
  rois.push_back(square_roi("gamma", 0.5, -0.2, 0.3, 1.5));

  std::vector<GazePoint3D> pts;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1),
                 rng.uniform(1.45, 2.06));
    pts.push_back(hit_sample(i, Vec3(0, 0, 1), p));
  }
  const auto mine = aoi_hits(pts, rois, 0.02);

  for (int i = 0; i < 10000; ++i) {
    // oracle: check distance and 2D containment per ROI directly
    int best = -1;
    double best_d = 1e300;
    for (int r = 0; r < 3; ++r) {
      const auto& roi = rois[r];
      const double z0 = roi.polygon[0].z();
      const double d = std::abs(pts[i].point.z() - z0);
      if (d > 0.02) continue;
      const double x = pts[i].point.x(), y = pts[i].point.y();
      const double xmin = roi.polygon[0].x(), xmax = roi.polygon[1].x();
      const double ymin = roi.polygon[0].y(), ymax = roi.polygon[2].y();
      if (x < xmin || x > xmax || y < ymin || y > ymax) continue;
      if (d < best_d || (d == best_d && best >= 0 && roi.roi_label < rois[best].roi_label)) {
        best = r;
        best_d = d;
      }
    }
    REQUIRE(mine[i] == best);
  }
}

TEST_CASE("dwell_times: arithmetic and splitting") {
  const std::vector<ROI3D> rois = {square_roi("a", 0, 0, 1, 2.0)};

  SUBCASE("15 samples at 30 Hz give dwell 500 ms") {
    std::vector<int> labels;
    std::vector<std::int64_t> ts;
    for (int i = 0; i < 15; ++i) {
      ts.push_back(1000 + static_cast<std::int64_t>(std::llround(i * 1000.0 / 30.0)));
      labels.push_back(0);
    }
    CHECK(ts.back() == 1467);
    const auto dwells = dwell_times(labels, ts, rois, 0.0);
    REQUIRE(dwells.size() == 1);
    CHECK(dwells[0].entry_ms == doctest::Approx(1000.0));
    CHECK(dwells[0].dwell_ms == doctest::Approx(500.0));
    CHECK(dwells[0].sample_count == 15);
  }

  SUBCASE("interior miss splits at max_gap 0") {
    const std::vector<int> labels = {0, 0, -1, 0};
    const std::vector<std::int64_t> ts = {0, 33, 67, 100};
    const auto dwells = dwell_times(labels, ts, rois, 0.0);
    CHECK(dwells.size() == 2);
  }

  SUBCASE("gap within allowance keeps the run together") {
    const std::vector<int> labels = {0, 0, -1, 0};
    const std::vector<std::int64_t> ts = {0, 33, 67, 100};
    const auto dwells = dwell_times(labels, ts, rois, 50.0);
    CHECK(dwells.size() == 1);
    CHECK(dwells[0].sample_count == 3);
  }
}

TEST_CASE("dwell_times: conservation on a scripted assignment") {
  const std::vector<ROI3D> rois = {square_roi("a", 0, 0, 1, 2.0), square_roi("b", 0, 0, 1, 3.0)};
  Rng rng(402);
  std::vector<int> labels;
  std::vector<std::int64_t> ts;
  std::vector<int> per_roi_hits(2, 0);
  for (int i = 0; i < 300; ++i) {
    ts.push_back(i * 33 + (i % 3 == 0 ? 1 : 0));  // jittered 30 Hz
    const double u = rng.uniform();
    int label = u < 0.4 ? 0 : (u < 0.7 ? 1 : -1);
    labels.push_back(label);
    if (label >= 0) ++per_roi_hits[label];
  }
  const auto dwells = dwell_times(labels, ts, rois, 0.0);
  const double period = nominal_period_ms(ts);
  std::vector<double> total(2, 0.0);
  std::vector<int> count(2, 0);
  for (const auto& d : dwells) {
    total[d.roi_index] += d.dwell_ms;
    ++count[d.roi_index];
  }
  for (int r = 0; r < 2; ++r) {
    // sum of dwells = hits * period, within one period per dwell
    CHECK(std::abs(total[r] - per_roi_hits[r] * period) <= count[r] * period + 1e-9);
  }
}

TEST_CASE("saliency_map: unit mass, linearity, boundary renormalization") {
  Fixation f;
  f.centroid_3d = Vec3(0.55, 0.55, 0.55);
  f.duration_ms = 200;
  const Vec3 origin(0, 0, 0);
  const std::array<int, 3> dims = {10, 10, 10};

  const SaliencyGrid one = saliency_map({f}, origin, 0.1, dims, 0.1);
  double mass = 0.0;
  for (double m : one.mass) mass += m;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(one.splatted_fixations == 1);

  // argmax voxel contains the centroid
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < one.mass.size(); ++i)
    if (one.mass[i] > one.mass[argmax]) argmax = i;
  CHECK(argmax == one.linear_index(5, 5, 5));

  const SaliencyGrid two = saliency_map({f, f}, origin, 0.1, dims, 0.1);
  for (std::size_t i = 0; i < two.mass.size(); ++i)
    CHECK(two.mass[i] == doctest::Approx(2.0 * one.mass[i]).epsilon(1e-12));

  Fixation edge;
  edge.centroid_3d = Vec3(0.05, 0.05, 0.05);  // corner: truncated support
  const SaliencyGrid trunc = saliency_map({edge}, origin, 0.1, dims, 0.1);
  mass = 0.0;
  for (double m : trunc.mass) mass += m;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

  // far outside the grid: not splatted
  Fixation outside;
  outside.centroid_3d = Vec3(50, 50, 50);
  const SaliencyGrid none = saliency_map({outside}, origin, 0.1, dims, 0.1);
  CHECK(none.splatted_fixations == 0);
}

TEST_CASE("summarize: per-ROI aggregation and inclusive recognition threshold") {
  const std::vector<ROI3D> rois = {square_roi("a", 0, 0, 0.5, 2.0)};
  std::vector<GazePoint3D> pts;
  // 3 separate visits to ROI a: 16, 15, 15 samples -> about 1.5 s total
  std::int64_t t = 0;
  int idx = 0;
  std::vector<Fixation> fixations;
  for (int visit = 0; visit < 3; ++visit) {
    Fixation f;
    f.start_ms = t;
    f.first_sample = idx;
    const int n = visit == 0 ? 16 : 15;
    for (int i = 0; i < n; ++i) {
      pts.push_back(hit_sample(t, Vec3(0, 0, 1), Vec3(0, 0, 2.0)));
      t += 33;
      ++idx;
    }
    f.last_sample = idx - 1;
    f.duration_ms = pts.back().t_ms - f.start_ms;
    f.centroid_3d = Vec3(0, 0, 2.0);
    fixations.push_back(f);
    // gap away from the ROI
    for (int i = 0; i < 4; ++i) {
      pts.push_back(hit_sample(t, Vec3(1, 0, 1), Vec3(5, 5, 5)));
      t += 33;
      ++idx;
    }
  }
  std::vector<std::int64_t> ts;
  for (const auto& p : pts) ts.push_back(p.t_ms);
  const auto hits = aoi_hits(pts, rois, 0.02);
  const auto dwells = dwell_times(hits, ts, rois, 0.0);
  const AttentionReport report = summarize(pts, fixations, dwells, rois, 0.02, 100);

  REQUIRE(report.rois.size() == 1);
  CHECK(report.rois[0].dwell_count == 3);
  CHECK(report.rois[0].total_dwell_ms ==
        doctest::Approx(46.0 * 33.0).epsilon(0.05));  // one sample period per hit sample
  CHECK(report.rois[0].fixation_count == 3);
  CHECK(report.rois[0].recognition_capable_fixations == 3);  // all >= 100 ms

  // exactly 100 ms counts as recognition-capable
  Fixation brief;
  brief.duration_ms = 100;
  brief.centroid_3d = Vec3(0, 0, 2.0);
  const AttentionReport report2 = summarize(pts, {brief}, dwells, rois, 0.02, 100);
  CHECK(report2.rois[0].recognition_capable_fixations == 1);

  // no ROIs: totals still filled
  const AttentionReport empty = summarize(pts, fixations, {}, {}, 0.02, 100);
  CHECK(empty.rois.empty());
  CHECK(empty.total_samples == static_cast<int>(pts.size()));
  CHECK(empty.hit_pct > 0.0);
}

TEST_CASE("summarize: assigned hits never exceed hit samples") {
  Rng rng(403);
  std::vector<ROI3D> rois = {square_roi("a", 0, 0, 0.3, 2.0), square_roi("b", 0.2, 0, 0.3, 2.0)};
  std::vector<GazePoint3D> pts;
  for (int i = 0; i < 500; ++i)
    pts.push_back(hit_sample(i * 33, Vec3(0, 0, 1),
                             Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 2.0)));
  const auto hits = aoi_hits(pts, rois, 0.02);
  int assigned = 0;
  for (int h : hits)
    if (h >= 0) ++assigned;
  const AttentionReport report = summarize(pts, {}, {}, rois, 0.02, 100);
  int sum = 0;
  for (const auto& r : report.rois) sum += r.aoi_hit_count;
  CHECK(sum == assigned);
  CHECK(sum <= report.hit_samples);
}

TEST_CASE("fixation span monotone in the dispersion threshold") {
  const ScriptedSession s = scripted_session();
  int prev_span = -1;
  for (const double threshold : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const auto fixations = detect_fixations(s.points, threshold, 100);
    int span = 0;
    for (const auto& f : fixations) span += f.last_sample - f.first_sample + 1;
    CHECK(span >= prev_span);
    prev_span = span;
  }
}
