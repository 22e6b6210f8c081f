#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaze3d/gaze_recovery.hpp"
#include "gaze3d/semantic_rois.hpp"

namespace gaze3d {

struct Fixation {
  std::int64_t start_ms = 0;
  std::int64_t duration_ms = 0;     // last sample timestamp - first
  Vec3 centroid_3d = Vec3::Zero();  // mean of the hit points
  int first_sample = 0;             // inclusive sample index range
  int last_sample = 0;
  double mean_dispersion_deg = 0.0;
};

struct DwellRecord {
  std::string roi_label;
  double entry_ms = 0.0;
  double exit_ms = 0.0;  // last hit + one nominal sample period
  double dwell_ms = 0.0;
  int sample_count = 0;
  int roi_index = -1;
};

/// Dispersion-threshold fixation detection (I-DT) on gaze rays: windows of
/// consecutive Hit samples grow greedily from the left while the maximum
/// pairwise angular separation stays within the threshold, and are emitted
/// when they span at least min_duration_ms.
std::vector<Fixation> detect_fixations(const std::vector<GazePoint3D>& points,
                                       double dispersion_threshold_deg,
                                       std::int64_t min_duration_ms);

/// Per-sample ROI assignment (-1 = none): a Hit sample belongs to an ROI when
/// it lies within tolerance of the ROI plane and its projection falls inside
/// the polygon, boundary inclusive. Overlaps resolve to the smallest plane
/// distance, ties by label then index.
std::vector<int> aoi_hits(const std::vector<GazePoint3D>& points, const std::vector<ROI3D>& rois,
                          double tolerance_m = 0.02);

/// Same test for a bare point.
int aoi_assign(const Vec3& point, const std::vector<ROI3D>& rois, double tolerance_m = 0.02);

/// Median inter-sample gap; 0 when fewer than two samples.
double nominal_period_ms(const std::vector<std::int64_t>& timestamps);

/// Maximal same-ROI runs; interior gaps of contiguous duration <= max_gap_ms
/// do not split a run. Records are ordered by entry time, then label.
std::vector<DwellRecord> dwell_times(const std::vector<int>& hit_labels,
                                     const std::vector<std::int64_t>& timestamps,
                                     const std::vector<ROI3D>& rois, double max_gap_ms = 0.0);

/// Voxel field accumulating one truncated Gaussian splat of unit mass per
/// fixation (duration-weighted mass when requested).
struct SaliencyGrid {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.05;
  std::array<int, 3> dims = {0, 0, 0};
  std::vector<double> mass;  // x-fastest
  int splatted_fixations = 0;
  double total_mass = 0.0;

  std::size_t linear_index(int ix, int iy, int iz) const {
    return static_cast<std::size_t>(ix) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(iy) + static_cast<std::size_t>(dims[1]) * iz);
  }
};

SaliencyGrid saliency_map(const std::vector<Fixation>& fixations, const Vec3& origin,
                          double resolution, const std::array<int, 3>& dims, double sigma_m,
                          bool duration_weighted = false);

struct RoiStats {
  std::string roi_label;
  double total_dwell_ms = 0.0;
  int dwell_count = 0;
  int aoi_hit_count = 0;  // raw samples
  int fixation_count = 0;
  int recognition_capable_fixations = 0;  // duration >= 100 ms, inclusive
};

struct AttentionReport {
  std::vector<RoiStats> rois;  // sorted by label
  double localized_pct = 0.0;
  double hit_pct = 0.0;
  double fixation_rate_hz = 0.0;
  int total_samples = 0;
  int hit_samples = 0;
  int fixation_count = 0;
};

AttentionReport summarize(const std::vector<GazePoint3D>& points,
                          const std::vector<Fixation>& fixations,
                          const std::vector<DwellRecord>& dwells, const std::vector<ROI3D>& rois,
                          double aoi_tolerance_m = 0.02,
                          std::int64_t recognition_threshold_ms = 100);

}  // namespace gaze3d
