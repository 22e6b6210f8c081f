#include "gaze3d/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace gaze3d {

std::vector<Fixation> detect_fixations(const std::vector<GazePoint3D>& points,
                                       double dispersion_threshold_deg,
                                       std::int64_t min_duration_ms) {
  std::vector<Fixation> out;
  const int n = static_cast<int>(points.size());
  int i = 0;
  while (i < n) {
    if (points[i].status != GazeStatus::Hit) {
      ++i;
      continue;
    }
    // Grow [i, j] while all pairwise ray separations stay within threshold.
    std::vector<Vec3> dirs = {points[i].ray.direction};
    double max_pair = 0.0;
    double sum_pair = 0.0;
    int pairs = 0;
    int j = i;
    while (j + 1 < n && points[j + 1].status == GazeStatus::Hit) {
      const Vec3& cand = points[j + 1].ray.direction;
      double cand_max = max_pair;
      double cand_sum = sum_pair;
      for (const auto& d : dirs) {
        const double a = angular_error_deg(d, cand);
        cand_max = std::max(cand_max, a);
        cand_sum += a;
      }
      if (cand_max > dispersion_threshold_deg) break;
      max_pair = cand_max;
      sum_pair = cand_sum;
      pairs += static_cast<int>(dirs.size());
      dirs.push_back(cand);
      ++j;
    }
    const std::int64_t duration = points[j].t_ms - points[i].t_ms;
    if (duration >= min_duration_ms) {
      Fixation f;
      f.start_ms = points[i].t_ms;
      f.duration_ms = duration;
      f.first_sample = i;
      f.last_sample = j;
      Vec3 centroid = Vec3::Zero();
      for (int k = i; k <= j; ++k) centroid += points[k].point;
      f.centroid_3d = centroid / static_cast<double>(j - i + 1);
      f.mean_dispersion_deg = pairs > 0 ? sum_pair / pairs : 0.0;
      out.push_back(f);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

int aoi_assign(const Vec3& point, const std::vector<ROI3D>& rois, double tolerance_m) {
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int r = 0; r < static_cast<int>(rois.size()); ++r) {
    const ROI3D& roi = rois[r];
    const Vec3 centroid =
        (roi.polygon[0] + roi.polygon[1] + roi.polygon[2] + roi.polygon[3]) / 4.0;
    const double dist = std::abs(roi.normal.dot(point - centroid));
    if (dist > tolerance_m) continue;

    // In-plane containment, boundary inclusive, for the convex quad.
    const Vec3 proj = point - roi.normal.dot(point - centroid) * roi.normal;
    bool inside = true;
    double sign = 0.0;
    for (int i = 0; i < 4; ++i) {
      const Vec3 edge = roi.polygon[(i + 1) % 4] - roi.polygon[i];
      const Vec3 to_p = proj - roi.polygon[i];
      const double s = roi.normal.dot(edge.cross(to_p));
      if (std::abs(s) < 1e-12) continue;  // on the edge line
      if (sign == 0.0)
        sign = s;
      else if (sign * s < 0.0) {
        inside = false;
        break;
      }
    }
    if (!inside) continue;

    if (dist < best_dist ||
        (dist == best_dist && best >= 0 &&
         (rois[r].roi_label < rois[best].roi_label ||
          (rois[r].roi_label == rois[best].roi_label && r < best)))) {
      best = r;
      best_dist = dist;
    }
  }
  return best;
}

std::vector<int> aoi_hits(const std::vector<GazePoint3D>& points, const std::vector<ROI3D>& rois,
                          double tolerance_m) {
  std::vector<int> out(points.size(), -1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].status != GazeStatus::Hit) continue;
    out[i] = aoi_assign(points[i].point, rois, tolerance_m);
  }
  return out;
}

double nominal_period_ms(const std::vector<std::int64_t>& timestamps) {
  if (timestamps.size() < 2) return 0.0;
  std::vector<std::int64_t> gaps;
  gaps.reserve(timestamps.size() - 1);
  for (std::size_t i = 1; i < timestamps.size(); ++i)
    gaps.push_back(timestamps[i] - timestamps[i - 1]);
  std::sort(gaps.begin(), gaps.end());
  const std::size_t m = gaps.size();
  if (m % 2 == 1) return static_cast<double>(gaps[m / 2]);
  return 0.5 * static_cast<double>(gaps[m / 2 - 1] + gaps[m / 2]);
}

std::vector<DwellRecord> dwell_times(const std::vector<int>& hit_labels,
                                     const std::vector<std::int64_t>& timestamps,
                                     const std::vector<ROI3D>& rois, double max_gap_ms) {
  if (hit_labels.size() != timestamps.size())
    fail(Errc::length_mismatch, "hit labels and timestamps differ in length");
  const double period = nominal_period_ms(timestamps);

  std::vector<DwellRecord> out;
  auto flush = [&](int roi, int first, int last, int count) {
    DwellRecord rec;
    rec.roi_index = roi;
    rec.roi_label = rois[roi].roi_label;
    rec.entry_ms = static_cast<double>(timestamps[first]);
    rec.exit_ms = static_cast<double>(timestamps[last]) + period;
    rec.dwell_ms = rec.exit_ms - rec.entry_ms;
    rec.sample_count = count;
    out.push_back(rec);
  };

  const int n = static_cast<int>(hit_labels.size());
  for (int roi = 0; roi < static_cast<int>(rois.size()); ++roi) {
    int first = -1, prev = -1, count = 0;
    for (int i = 0; i < n; ++i) {
      if (hit_labels[i] != roi) continue;
      if (first < 0) {
        first = prev = i;
        count = 1;
        continue;
      }
      // The gap between consecutive hits is the elapsed time beyond one
      // nominal sample period; adjacent samples never split a run.
      const double dt = static_cast<double>(timestamps[i] - timestamps[prev]);
      const bool adjacent = (i == prev + 1) && dt <= 1.5 * period;
      if (adjacent || dt - period <= max_gap_ms) {
        prev = i;
        ++count;
      } else {
        flush(roi, first, prev, count);
        first = prev = i;
        count = 1;
      }
    }
    if (first >= 0) flush(roi, first, prev, count);
  }

  std::stable_sort(out.begin(), out.end(), [](const DwellRecord& a, const DwellRecord& b) {
    if (a.entry_ms != b.entry_ms) return a.entry_ms < b.entry_ms;
    return a.roi_label < b.roi_label;
  });
  return out;
}

SaliencyGrid saliency_map(const std::vector<Fixation>& fixations, const Vec3& origin,
                          double resolution, const std::array<int, 3>& dims, double sigma_m,
                          bool duration_weighted) {
  if (!(sigma_m > 0.0)) fail(Errc::bad_range, "sigma must be > 0");
  SaliencyGrid grid;
  grid.origin = origin;
  grid.resolution = resolution;
  grid.dims = dims;
  grid.mass.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0);

  const double radius = 3.0 * sigma_m;
  for (const auto& f : fixations) {
    const Vec3& c = f.centroid_3d;
    std::array<int, 2> rx, ry, rz;
    const auto range_for = [&](int axis, std::array<int, 2>& r) {
      const double lo = (c(axis) - radius - origin(axis)) / resolution;
      const double hi = (c(axis) + radius - origin(axis)) / resolution;
      r[0] = std::max(0, static_cast<int>(std::floor(lo)));
      r[1] = std::min(dims[axis] - 1, static_cast<int>(std::floor(hi)));
    };
    range_for(0, rx);
    range_for(1, ry);
    range_for(2, rz);

    // Two passes: total weight inside the grid, then renormalized deposit.
    double total = 0.0;
    for (int iz = rz[0]; iz <= rz[1]; ++iz)
      for (int iy = ry[0]; iy <= ry[1]; ++iy)
        for (int ix = rx[0]; ix <= rx[1]; ++ix) {
          const Vec3 center = origin + resolution * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
          const double d2 = (center - c).squaredNorm();
          if (d2 > radius * radius) continue;
          total += std::exp(-d2 / (2.0 * sigma_m * sigma_m));
        }
    if (total <= 0.0) continue;  // fixation has no support inside the grid

    const double mass = duration_weighted ? static_cast<double>(f.duration_ms) / 1000.0 : 1.0;
    for (int iz = rz[0]; iz <= rz[1]; ++iz)
      for (int iy = ry[0]; iy <= ry[1]; ++iy)
        for (int ix = rx[0]; ix <= rx[1]; ++ix) {
          const Vec3 center = origin + resolution * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
          const double d2 = (center - c).squaredNorm();
          if (d2 > radius * radius) continue;
          grid.mass[grid.linear_index(ix, iy, iz)] +=
              mass * std::exp(-d2 / (2.0 * sigma_m * sigma_m)) / total;
        }
    ++grid.splatted_fixations;
    grid.total_mass += mass;
  }
  return grid;
}

AttentionReport summarize(const std::vector<GazePoint3D>& points,
                          const std::vector<Fixation>& fixations,
                          const std::vector<DwellRecord>& dwells, const std::vector<ROI3D>& rois,
                          double aoi_tolerance_m, std::int64_t recognition_threshold_ms) {
  AttentionReport report;
  report.total_samples = static_cast<int>(points.size());
  report.fixation_count = static_cast<int>(fixations.size());

  // Stats aggregate per label; multiple ROI instances with one label share a row.
  std::map<std::string, RoiStats> by_label;
  for (const auto& r : rois) {
    auto& row = by_label[r.roi_label];
    row.roi_label = r.roi_label;
  }

  const std::vector<int> hits = aoi_hits(points, rois, aoi_tolerance_m);
  int localized = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].frame_localized) ++localized;
    if (points[i].status == GazeStatus::Hit) ++report.hit_samples;
    if (hits[i] >= 0) ++by_label[rois[hits[i]].roi_label].aoi_hit_count;
  }

  for (const auto& d : dwells) {
    auto& row = by_label[d.roi_label];
    row.roi_label = d.roi_label;
    row.total_dwell_ms += d.dwell_ms;
    ++row.dwell_count;
  }

  for (const auto& f : fixations) {
    const int r = aoi_assign(f.centroid_3d, rois, aoi_tolerance_m);
    if (r < 0) continue;
    auto& row = by_label[rois[r].roi_label];
    ++row.fixation_count;
    if (f.duration_ms >= recognition_threshold_ms) ++row.recognition_capable_fixations;
  }

  for (auto& [label, row] : by_label) report.rois.push_back(row);

  report.localized_pct =
      points.empty() ? 0.0 : 100.0 * static_cast<double>(localized) / points.size();
  report.hit_pct =
      points.empty() ? 0.0 : 100.0 * static_cast<double>(report.hit_samples) / points.size();
  if (points.size() >= 2) {
    const double span_s =
        static_cast<double>(points.back().t_ms - points.front().t_ms) / 1000.0;
    if (span_s > 0.0) report.fixation_rate_hz = report.fixation_count / span_s;
  }
  return report;
}

}  // namespace gaze3d
