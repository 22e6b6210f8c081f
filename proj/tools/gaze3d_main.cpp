#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "gaze3d/io.hpp"

namespace {

using namespace gaze3d;
namespace fs = std::filesystem;

bool g_quiet = false;

template <typename... Args>
void note(const char* fmt, Args... args) {
  if (g_quiet) return;
  std::printf(fmt, args...);
  std::printf("\n");
}

std::string frame_file(const char* stem, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.json", stem, index);
  return buf;
}

FeatureFrame to_feature_frame(int frame_index, const std::vector<Keypoint>& kps) {
  FeatureFrame ff;
  ff.frame_index = frame_index;
  bool any_id = false;
  for (const auto& kp : kps) {
    ff.pixels.push_back(kp.pixel);
    ff.descriptors.push_back(kp.descriptor);
    if (kp.landmark_id >= 0) any_id = true;
  }
  if (any_id)
    for (const auto& kp : kps) ff.landmark_ids.push_back(kp.landmark_id);
  return ff;
}

int cmd_simulate(const fs::path& spec_path, const fs::path& out_dir,
                 std::optional<std::uint64_t> seed) {
  SceneSpec spec = io::load_scene_spec(spec_path);
  if (seed) spec.seed = *seed;
  const Scene scene = generate_scene(spec);

  io::SessionManifest manifest;
  manifest.descriptor_dim = spec.descriptor_dim;
  manifest.frame_rate_hz = spec.gaze_trajectory.frame_rate_hz;
  manifest.scene_intr = spec.scene_intr;
  manifest.rgbd_intr = spec.rgbd_intr;
  manifest.grid = spec.grid;

  for (int i = 0; i < spec.mapping_trajectory.frame_count; ++i) {
    const Pose pose = trajectory_pose(spec.mapping_trajectory, i);
    const DepthFrame frame = render_frame(scene, pose, spec.rgbd_intr, spec.noise, i, true);
    const std::string ffile = "mapping/" + frame_file("features", i);
    const std::string dfile = "mapping/" + frame_file("depth", i);
    io::save_feature_file(out_dir / ffile, to_feature_frame(i, frame.keypoints));
    io::save_depth_file(out_dir / dfile, {i, frame.samples});
    manifest.mapping_features.push_back(ffile);
    manifest.mapping_depth.push_back(dfile);
  }

  const GeneratedSession session =
      generate_gaze_session(scene, spec.gaze_trajectory, spec.gaze_script, spec.noise);
  for (const auto& [frame_index, kps] : session.frame_keypoints) {
    const std::string ffile = "gaze/" + frame_file("features", frame_index);
    io::save_feature_file(out_dir / ffile, to_feature_frame(frame_index, kps));
    manifest.gaze_features.push_back(ffile);
  }
  manifest.gaze_file = "gaze.jsonl";
  io::save_gaze_file(out_dir / manifest.gaze_file, session.samples);
  io::save_truth(out_dir / "truth.jsonl", session.truth);
  io::save_session_manifest(out_dir, manifest);
  if (!scene.references.empty()) io::save_references(out_dir / "refs", scene.references);

  note("scene: %zu landmarks, %zu references", scene.landmarks.size(), scene.references.size());
  note("session: %d mapping frames, %d gaze frames, %zu samples",
       spec.mapping_trajectory.frame_count, spec.gaze_trajectory.frame_count,
       session.samples.size());
  return 0;
}

int cmd_map_build(const fs::path& session_dir, const fs::path& map_path,
                  const fs::path& grid_path, const io::PipelineConfig& cfg) {
  const io::SessionManifest manifest = io::load_session_manifest(session_dir);
  if (manifest.mapping_features.empty())
    fail(Errc::invalid_spec, "session has no mapping frames");

  auto load_depth_frame = [&](int i) {
    const FeatureFrame ff = io::load_feature_file(session_dir / manifest.mapping_features[i]);
    const io::DepthFileData dd = io::load_depth_file(session_dir / manifest.mapping_depth[i]);
    if (dd.frame_index != ff.frame_index)
      fail(Errc::io_error, "feature/depth frame index mismatch at " +
                               manifest.mapping_features[i]);
    DepthFrame frame;
    frame.frame_index = ff.frame_index;
    frame.keypoints = extract_features(ff, manifest.descriptor_dim);
    frame.samples = dd.samples;
    return frame;
  };

  OccupancyGrid grid(manifest.grid.origin, manifest.grid.resolution, manifest.grid.dims);

  DepthFrame frame0 = load_depth_frame(0);
  SparseMap map = bootstrap_map(frame0, manifest.rgbd_intr);
  std::size_t skipped_samples = grid.integrate_depth(frame0, Pose::identity(), manifest.rgbd_intr);

  Pose prior = Pose::identity();
  int tracked = 1;
  int lost = 0;
  for (int i = 1; i < static_cast<int>(manifest.mapping_features.size()); ++i) {
    const DepthFrame frame = load_depth_frame(i);
    TrackResult track;
    try {
      track = track_pose(map, frame.keypoints, manifest.rgbd_intr, prior, cfg.pnp);
    } catch (const Error& e) {
      if (e.code() != Errc::too_few_matches && e.code() != Errc::no_consensus) throw;
      note("frame %d lost (%s)", frame.frame_index, e.what());
      ++lost;
      continue;
    }
    maybe_insert_keyframe(map, frame.keypoints, track, frame, manifest.rgbd_intr, cfg.keyframe);
    skipped_samples += grid.integrate_depth(frame, track.pnp.pose, manifest.rgbd_intr);
    prior = track.pnp.pose;
    ++tracked;
  }

  io::save_map(map_path, map);
  io::save_grid(grid_path, io::to_grid_data(grid));

  const double fraction = static_cast<double>(map.keyframes.size()) /
                          static_cast<double>(manifest.mapping_features.size());
  note("tracked %d/%zu frames (%d lost)", tracked, manifest.mapping_features.size(), lost);
  note("map: %zu landmarks, %zu keyframes (fraction %.2f)", map.landmarks.size(),
       map.keyframes.size(), fraction);
  note("grid: %zu occupied voxels, %zu skipped samples", grid.export_occupied().size(),
       skipped_samples);
  return 0;
}

int cmd_localize(const fs::path& map_path, const fs::path& session_dir, const fs::path& out_path,
                 const io::PipelineConfig& cfg) {
  const io::SessionManifest manifest = io::load_session_manifest(session_dir);
  const SparseMap map = io::load_map(map_path);
  std::vector<LocalizedFrame> frames;
  std::optional<LocalizedFrame> prev;
  for (const auto& rel : manifest.gaze_features) {
    const FeatureFrame ff = io::load_feature_file(session_dir / rel);
    LocalizedFrame lf = localize_frame(map, extract_features(ff, manifest.descriptor_dim),
                                       manifest.scene_intr, prev, cfg.pnp);
    lf.frame_index = ff.frame_index;
    if (lf.status == FrameStatus::Localized) prev = lf;
    frames.push_back(lf);
  }
  io::save_poses(out_path, frames);
  const auto localized = std::count_if(frames.begin(), frames.end(), [](const LocalizedFrame& f) {
    return f.status == FrameStatus::Localized;
  });
  note("localized %zd/%zu frames", localized, frames.size());
  return 0;
}

int cmd_gaze_recover(const fs::path& map_path, const fs::path& grid_path,
                     const fs::path& session_dir, const fs::path& out_path,
                     const io::PipelineConfig& cfg) {
  const io::SessionManifest manifest = io::load_session_manifest(session_dir);
  const SparseMap map = io::load_map(map_path);
  const OccupancyGrid grid = io::to_occupancy_grid(io::load_grid(grid_path));
  const std::vector<GazeSample> samples = io::load_gaze_file(session_dir / manifest.gaze_file);

  std::map<int, std::vector<Keypoint>> frame_keypoints;
  for (const auto& rel : manifest.gaze_features) {
    const FeatureFrame ff = io::load_feature_file(session_dir / rel);
    frame_keypoints[ff.frame_index] = extract_features(ff, manifest.descriptor_dim);
  }

  const SessionResult result = recover_session(samples, frame_keypoints, map, grid,
                                               manifest.scene_intr, cfg.pnp, cfg.max_range_m);
  io::save_gaze3d(out_path, result.points);
  note("localized %.1f%% of frames, hit %.1f%% of samples", result.localized_pct, result.hit_pct);
  return 0;
}

int cmd_roi_annotate(const fs::path& map_path, const fs::path& grid_path, const fs::path& refs_dir,
                     const fs::path& session_dir, const fs::path& out_path,
                     const io::PipelineConfig& cfg) {
  const io::SessionManifest manifest = io::load_session_manifest(session_dir);
  const SparseMap map = io::load_map(map_path);
  const OccupancyGrid grid = io::to_occupancy_grid(io::load_grid(grid_path));
  const std::vector<ReferenceAppearance> refs = io::load_references(refs_dir);
  if (refs.empty()) fail(Errc::invalid_spec, "reference directory has no references");
  const ReferenceIndex index(refs, cfg.tree_k, cfg.tree_levels, cfg.roi.seed);

  std::vector<ROI3D> lifted;
  int detections = 0;
  std::optional<LocalizedFrame> prev;
  for (const auto& rel : manifest.mapping_features) {
    const FeatureFrame ff = io::load_feature_file(session_dir / rel);
    const std::vector<Keypoint> kps = extract_features(ff, manifest.descriptor_dim);
    LocalizedFrame lf = localize_frame(map, kps, manifest.rgbd_intr, prev, cfg.pnp);
    lf.frame_index = ff.frame_index;
    if (lf.status != FrameStatus::Localized) continue;
    prev = lf;
    for (const auto& det : index.detect(kps, ff.frame_index, cfg.roi)) {
      ++detections;
      if (auto roi = lift_roi(det, lf.pose, manifest.rgbd_intr, grid, cfg.max_range_m))
        lifted.push_back(std::move(*roi));
    }
  }
  const std::vector<ROI3D> merged = merge_rois(lifted);
  io::save_rois(out_path, merged);
  note("%d detections, %zu lifted, %zu merged ROIs", detections, lifted.size(), merged.size());
  return 0;
}

int cmd_analyze(const fs::path& gaze3d_path, const fs::path& rois_path, const fs::path& grid_path,
                const fs::path& report_csv, const fs::path& report_json,
                const fs::path& saliency_path, const io::PipelineConfig& cfg) {
  const std::vector<GazePoint3D> points = io::load_gaze3d(gaze3d_path);
  const std::vector<ROI3D> rois = io::load_rois(rois_path);
  const io::GridData geom = io::load_grid(grid_path);

  const std::vector<Fixation> fixations =
      detect_fixations(points, cfg.fixation_dispersion_deg, cfg.fixation_min_duration_ms);
  const std::vector<int> hits = aoi_hits(points, rois, cfg.aoi_tolerance_m);
  std::vector<std::int64_t> timestamps;
  timestamps.reserve(points.size());
  for (const auto& p : points) timestamps.push_back(p.t_ms);
  const std::vector<DwellRecord> dwells = dwell_times(hits, timestamps, rois, cfg.dwell_max_gap_ms);
  const AttentionReport report =
      summarize(points, fixations, dwells, rois, cfg.aoi_tolerance_m, 100);

  io::save_report_csv(report_csv, report);
  if (!report_json.empty()) io::save_report_json(report_json, report);
  const SaliencyGrid saliency =
      saliency_map(fixations, geom.origin, geom.resolution, geom.dims, cfg.saliency_sigma_m,
                   cfg.saliency_duration_weighted);
  io::save_grid(saliency_path, io::to_grid_data(saliency));

  note("%zu fixations, %zu dwells, %zu ROIs; saliency mass %.3f", fixations.size(), dwells.size(),
       rois.size(), saliency.total_mass);
  return 0;
}

int cmd_evaluate(const fs::path& gaze3d_path, const fs::path& truth_path,
                 const fs::path& out_path) {
  const std::vector<GazePoint3D> points = io::load_gaze3d(gaze3d_path);
  const std::vector<SampleTruth> truth = io::load_truth(truth_path);
  const EvalMetrics m = evaluate(points, truth);
  io::save_metrics(out_path, m);
  note("median angular %.4f deg, median 3d %.4f m (mean %.4f deg / %.4f m)", m.median_angular_deg,
       m.median_3d_m, m.mean_angular_deg, m.mean_3d_m);
  note("localized %.1f%%, hit %.1f%% of %d samples", m.localized_pct, m.hit_pct, m.samples);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D gaze recovery and semantic attention analytics"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  app.add_flag("--quiet", g_quiet, "suppress progress output");
  app.add_option("--config", config_path, "pipeline configuration JSON");
  app.add_option("--seed", seed, "override the scene seed (simulate only)")
      ->each([&](const std::string&) { seed_set = true; });

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic session with ground truth");
  std::string sim_spec, sim_out, sim_example;
  sim->add_option("--spec", sim_spec, "scene spec JSON");
  sim->add_option("--out", sim_out, "output session directory");
  sim->add_option("--write-example", sim_example, "write the bundled desk-scene spec and exit");

  // map-build
  auto* mb = app.add_subcommand("map-build", "build the sparse map and occupancy grid");
  std::string mb_session, mb_map, mb_grid;
  mb->add_option("--session", mb_session)->required();
  mb->add_option("--map", mb_map)->required();
  mb->add_option("--grid", mb_grid)->required();

  // localize
  auto* loc = app.add_subcommand("localize", "localize scene-camera frames against a map");
  std::string loc_map, loc_session, loc_out;
  loc->add_option("--map", loc_map)->required();
  loc->add_option("--session", loc_session)->required();
  loc->add_option("--out", loc_out)->required();

  // gaze-recover
  auto* gr = app.add_subcommand("gaze-recover", "recover 3D gaze points for a session");
  std::string gr_map, gr_grid, gr_session, gr_out;
  gr->add_option("--map", gr_map)->required();
  gr->add_option("--grid", gr_grid)->required();
  gr->add_option("--session", gr_session)->required();
  gr->add_option("--out", gr_out)->required();

  // roi-annotate
  auto* ra = app.add_subcommand("roi-annotate", "detect reference appearances and lift 3D ROIs");
  std::string ra_map, ra_grid, ra_refs, ra_session, ra_out;
  ra->add_option("--map", ra_map)->required();
  ra->add_option("--grid", ra_grid)->required();
  ra->add_option("--refs", ra_refs)->required();
  ra->add_option("--session", ra_session)->required();
  ra->add_option("--out", ra_out)->required();

  // analyze
  auto* an = app.add_subcommand("analyze", "fixations, AOI hits, dwells, saliency, report");
  std::string an_gaze3d, an_rois, an_grid, an_report, an_report_json, an_saliency;
  an->add_option("--gaze3d", an_gaze3d)->required();
  an->add_option("--rois", an_rois)->required();
  an->add_option("--grid", an_grid, "grid file providing the saliency geometry")->required();
  an->add_option("--report", an_report, "report CSV output")->required();
  an->add_option("--report-json", an_report_json);
  an->add_option("--saliency", an_saliency, "saliency grid output")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "compare recovered gaze against ground truth");
  std::string ev_gaze3d, ev_truth, ev_out;
  ev->add_option("--gaze3d", ev_gaze3d)->required();
  ev->add_option("--truth", ev_truth)->required();
  ev->add_option("--out", ev_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const io::PipelineConfig cfg = io::load_config(config_path);
    if (sim->parsed()) {
      if (!sim_example.empty()) {
        io::write_atomic(sim_example, io::example_scene_spec_json());
        note("wrote %s", sim_example.c_str());
        return 0;
      }
      if (sim_spec.empty() || sim_out.empty()) {
        std::cerr << "simulate: --spec and --out are required (or --write-example)\n";
        return 1;
      }
      return cmd_simulate(sim_spec, sim_out,
                          seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
    }
    if (mb->parsed()) return cmd_map_build(mb_session, mb_map, mb_grid, cfg);
    if (loc->parsed()) return cmd_localize(loc_map, loc_session, loc_out, cfg);
    if (gr->parsed()) return cmd_gaze_recover(gr_map, gr_grid, gr_session, gr_out, cfg);
    if (ra->parsed()) return cmd_roi_annotate(ra_map, ra_grid, ra_refs, ra_session, ra_out, cfg);
    if (an->parsed())
      return cmd_analyze(an_gaze3d, an_rois, an_grid, an_report, an_report_json, an_saliency, cfg);
    if (ev->parsed()) return cmd_evaluate(ev_gaze3d, ev_truth, ev_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
