#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gaze3d/attention.hpp"
#include "gaze3d/gaze_recovery.hpp"
#include "gaze3d/semantic_rois.hpp"
#include "gaze3d/sim.hpp"
#include "gaze3d/world_model.hpp"

namespace gaze3d::io {

namespace fs = std::filesystem;

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

std::uint32_t crc32_bytes(const std::string& data);

/// Writes via a temporary file plus rename so failures leave no partial output.
void write_atomic(const fs::path& path, const std::string& data);
std::string read_file(const fs::path& path);

// --- per-frame feature and depth files (JSON) ---
FeatureFrame load_feature_file(const fs::path& path);
void save_feature_file(const fs::path& path, const FeatureFrame& frame);

struct DepthFileData {
  int frame_index = 0;
  std::vector<DepthSample> samples;
};
DepthFileData load_depth_file(const fs::path& path);
void save_depth_file(const fs::path& path, const DepthFileData& data);

// --- gaze samples (JSON lines) ---
std::vector<GazeSample> load_gaze_file(const fs::path& path);
void save_gaze_file(const fs::path& path, const std::vector<GazeSample>& samples);

// --- session manifest ---
struct SessionManifest {
  int descriptor_dim = 0;
  double frame_rate_hz = 30.0;
  CameraIntrinsics scene_intr;
  CameraIntrinsics rgbd_intr;
  GridSpec grid;                              // declared environment bounding box
  std::vector<std::string> mapping_features;  // relative to the session dir
  std::vector<std::string> mapping_depth;
  std::vector<std::string> gaze_features;
  std::string gaze_file;
};
SessionManifest load_session_manifest(const fs::path& session_dir);
void save_session_manifest(const fs::path& session_dir, const SessionManifest& manifest);

// --- sparse map (canonical JSON plus trailing CRC32 line) ---
void save_map(const fs::path& path, const SparseMap& map);
SparseMap load_map(const fs::path& path);

// --- voxel grids (binary, little-endian, CRC32 footer) ---
struct GridData {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.05;
  std::array<int, 3> dims = {1, 1, 1};
  std::vector<float> values;  // x-fastest
};
void save_grid(const fs::path& path, const GridData& grid);
GridData load_grid(const fs::path& path);

GridData to_grid_data(const OccupancyGrid& grid);
OccupancyGrid to_occupancy_grid(const GridData& data, const OccupancyParams& params = {});
GridData to_grid_data(const SaliencyGrid& grid);

// --- recovered gaze points (JSON lines) ---
void save_gaze3d(const fs::path& path, const std::vector<GazePoint3D>& points);
std::vector<GazePoint3D> load_gaze3d(const fs::path& path);

// --- per-frame localization records (JSON lines) ---
void save_poses(const fs::path& path, const std::vector<LocalizedFrame>& frames);

// --- ground truth (JSON lines) ---
void save_truth(const fs::path& path, const std::vector<SampleTruth>& truth);
std::vector<SampleTruth> load_truth(const fs::path& path);

// --- 3D ROIs ---
void save_rois(const fs::path& path, const std::vector<ROI3D>& rois);
std::vector<ROI3D> load_rois(const fs::path& path);

// --- reference appearances ---
struct ReferenceManifestEntry {
  std::string label;
  Vec2 size = Vec2::Zero();
  std::string file;  // feature file, relative to the refs dir
};
std::vector<ReferenceAppearance> load_references(const fs::path& refs_dir);
void save_references(const fs::path& refs_dir, const std::vector<ReferenceAppearance>& refs);

// --- attention report ---
void save_report_csv(const fs::path& path, const AttentionReport& report);
void save_report_json(const fs::path& path, const AttentionReport& report);
AttentionReport load_report_json(const fs::path& path);

// --- evaluation metrics ---
void save_metrics(const fs::path& path, const EvalMetrics& metrics);

// --- simulation scene spec ---
SceneSpec load_scene_spec(const fs::path& path);

/// Bundled desk-scale example spec serialized to JSON (used by `simulate
/// --write-example` and the test suites).
std::string example_scene_spec_json();

// --- pipeline configuration (defaults overridable from a JSON file) ---
struct PipelineConfig {
  PnPConfig pnp;
  KeyframePolicy keyframe;
  double max_range_m = 10.0;
  double fixation_dispersion_deg = 4.0;
  std::int64_t fixation_min_duration_ms = 100;
  double aoi_tolerance_m = 0.02;
  double dwell_max_gap_ms = 0.0;
  double saliency_sigma_m = 0.05;
  bool saliency_duration_weighted = false;
  int tree_k = 10;
  int tree_levels = 4;
  RoiDetectConfig roi;
};
PipelineConfig load_config(const fs::path& path);

}  // namespace gaze3d::io
