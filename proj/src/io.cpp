#include "gaze3d/io.hpp"

#include <zlib.h>

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gaze3d::io {

using nlohmann::json;

std::string format_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::uint32_t crc32_bytes(const std::string& data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data.data()),
                static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

void write_atomic(const fs::path& path, const std::string& data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot open " + tmp.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) fail(Errc::io_error, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json parse_json(const std::string& text, const fs::path& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::io_error, path.string() + ": " + e.what());
  }
}

json load_json_file(const fs::path& path) { return parse_json(read_file(path), path); }

const json& require(const json& j, const char* key, const fs::path& path) {
  auto it = j.find(key);
  if (it == j.end()) fail(Errc::io_error, path.string() + ": missing field '" + key + "'");
  return *it;
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const json& j, const fs::path& path) {
  if (!j.is_array() || j.size() != 3) fail(Errc::io_error, path.string() + ": expected [x,y,z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
Vec2 vec2_from(const json& j, const fs::path& path) {
  if (!j.is_array() || j.size() != 2) fail(Errc::io_error, path.string() + ": expected [u,v]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json pose7_json(const std::array<double, 7>& p) {
  json a = json::array();
  for (double v : p) a.push_back(v);
  return a;
}

std::array<double, 7> pose7_from(const json& j, const fs::path& path) {
  if (!j.is_array() || j.size() != 7)
    fail(Errc::io_error, path.string() + ": expected pose [qw,qx,qy,qz,tx,ty,tz]");
  std::array<double, 7> p;
  for (int i = 0; i < 7; ++i) p[i] = j[i].get<double>();
  return p;
}

json intrinsics_json(const CameraIntrinsics& intr) {
  return {{"cx", intr.cx},     {"cy", intr.cy},         {"fx", intr.fx},
          {"fy", intr.fy},     {"height", intr.height}, {"width", intr.width}};
}

CameraIntrinsics intrinsics_from(const json& j, const fs::path& path) {
  CameraIntrinsics intr;
  intr.fx = require(j, "fx", path).get<double>();
  intr.fy = require(j, "fy", path).get<double>();
  intr.cx = require(j, "cx", path).get<double>();
  intr.cy = require(j, "cy", path).get<double>();
  intr.width = require(j, "width", path).get<int>();
  intr.height = require(j, "height", path).get<int>();
  if (intr.fx <= 0 || intr.fy <= 0 || intr.cx <= 0 || intr.cx >= intr.width || intr.cy <= 0 ||
      intr.cy >= intr.height)
    fail(Errc::io_error, path.string() + ": invalid intrinsics");
  return intr;
}

json ray_json(const Ray& r) {
  return {{"d", vec3_json(r.direction)}, {"o", vec3_json(r.origin)}};
}

Ray ray_from(const json& j, const fs::path& path) {
  Ray r;
  r.origin = vec3_from(require(j, "o", path), path);
  r.direction = vec3_from(require(j, "d", path), path);
  return r;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& s, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(s, u);
}
void put_f64(std::string& s, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& data;
  std::size_t pos = 0;
  const fs::path& path;

  void need(std::size_t n) const {
    if (pos + n > data.size()) fail(Errc::io_error, path.string() + ": truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    const std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
};

}  // namespace

FeatureFrame load_feature_file(const fs::path& path) {
  const json j = load_json_file(path);
  FeatureFrame frame;
  frame.frame_index = require(j, "frame", path).get<int>();
  const json& kps = require(j, "keypoints", path);
  const json& descs = require(j, "descriptors", path);
  if (kps.size() != descs.size())
    fail(Errc::io_error, path.string() + ": keypoints and descriptors disagree in length");
  for (const auto& kp : kps) frame.pixels.push_back(vec2_from(kp, path));
  for (const auto& d : descs) {
    Descriptor desc(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) desc(static_cast<int>(i)) = d[i].get<double>();
    frame.descriptors.push_back(std::move(desc));
  }
  if (j.contains("landmark_ids")) {
    for (const auto& id : j["landmark_ids"]) frame.landmark_ids.push_back(id.get<std::int64_t>());
    if (frame.landmark_ids.size() != frame.pixels.size())
      fail(Errc::io_error, path.string() + ": landmark_ids length mismatch");
  }
  return frame;
}

void save_feature_file(const fs::path& path, const FeatureFrame& frame) {
  json j;
  j["frame"] = frame.frame_index;
  json kps = json::array();
  for (const auto& p : frame.pixels) kps.push_back(vec2_json(p));
  j["keypoints"] = std::move(kps);
  json descs = json::array();
  for (const auto& d : frame.descriptors) {
    json row = json::array();
    for (int i = 0; i < d.size(); ++i) row.push_back(d(i));
    descs.push_back(std::move(row));
  }
  j["descriptors"] = std::move(descs);
  if (!frame.landmark_ids.empty()) j["landmark_ids"] = frame.landmark_ids;
  write_atomic(path, j.dump() + "\n");
}

DepthFileData load_depth_file(const fs::path& path) {
  const json j = load_json_file(path);
  DepthFileData data;
  data.frame_index = require(j, "frame", path).get<int>();
  for (const auto& s : require(j, "samples", path)) {
    if (!s.is_array() || s.size() != 3)
      fail(Errc::io_error, path.string() + ": expected [u,v,depth_m] sample");
    const double depth = s[2].get<double>();
    if (!(depth > 0.0)) fail(Errc::io_error, path.string() + ": non-positive depth sample");
    data.samples.push_back({Vec2(s[0].get<double>(), s[1].get<double>()), depth});
  }
  return data;
}

void save_depth_file(const fs::path& path, const DepthFileData& data) {
  json j;
  j["frame"] = data.frame_index;
  json samples = json::array();
  for (const auto& s : data.samples)
    samples.push_back(json::array({s.pixel.x(), s.pixel.y(), s.depth}));
  j["samples"] = std::move(samples);
  write_atomic(path, j.dump() + "\n");
}

std::vector<GazeSample> load_gaze_file(const fs::path& path) {
  std::vector<GazeSample> out;
  for (const auto& line : split_lines(read_file(path))) {
    const json j = parse_json(line, path);
    GazeSample s;
    s.t_ms = require(j, "t_ms", path).get<std::int64_t>();
    s.frame_index = require(j, "frame", path).get<int>();
    s.gaze_px = vec2_from(require(j, "gaze_px", path), path);
    s.valid = require(j, "valid", path).get<bool>();
    out.push_back(s);
  }
  return out;
}

void save_gaze_file(const fs::path& path, const std::vector<GazeSample>& samples) {
  std::string text;
  for (const auto& s : samples) {
    json j = {{"frame", s.frame_index},
              {"gaze_px", vec2_json(s.gaze_px)},
              {"t_ms", s.t_ms},
              {"valid", s.valid}};
    text += j.dump();
    text += '\n';
  }
  write_atomic(path, text);
}

SessionManifest load_session_manifest(const fs::path& session_dir) {
  const fs::path path = session_dir / "manifest.json";
  const json j = load_json_file(path);
  SessionManifest m;
  m.descriptor_dim = require(j, "d", path).get<int>();
  m.frame_rate_hz = require(j, "frame_rate_hz", path).get<double>();
  m.scene_intr = intrinsics_from(require(j, "scene_intrinsics", path), path);
  m.rgbd_intr = intrinsics_from(require(j, "rgbd_intrinsics", path), path);
  const json& grid = require(j, "grid", path);
  m.grid.origin = vec3_from(require(grid, "origin", path), path);
  m.grid.resolution = require(grid, "resolution", path).get<double>();
  const json& gdims = require(grid, "dims", path);
  if (gdims.size() != 3) fail(Errc::io_error, path.string() + ": grid dims must be [nx,ny,nz]");
  m.grid.dims = {gdims[0].get<int>(), gdims[1].get<int>(), gdims[2].get<int>()};
  const json& mapping = require(j, "mapping", path);
  for (const auto& f : require(mapping, "features", path)) m.mapping_features.push_back(f.get<std::string>());
  for (const auto& f : require(mapping, "depth", path)) m.mapping_depth.push_back(f.get<std::string>());
  const json& gaze = require(j, "gaze", path);
  for (const auto& f : require(gaze, "features", path)) m.gaze_features.push_back(f.get<std::string>());
  m.gaze_file = require(gaze, "gaze_file", path).get<std::string>();
  if (m.mapping_features.size() != m.mapping_depth.size())
    fail(Errc::io_error, path.string() + ": mapping feature/depth lists disagree in length");

  for (const auto& rel : m.mapping_features)
    if (!fs::exists(session_dir / rel))
      fail(Errc::io_error, "missing mapping feature file " + (session_dir / rel).string());
  for (const auto& rel : m.mapping_depth)
    if (!fs::exists(session_dir / rel))
      fail(Errc::io_error, "missing mapping depth file " + (session_dir / rel).string());
  for (const auto& rel : m.gaze_features)
    if (!fs::exists(session_dir / rel))
      fail(Errc::io_error, "missing gaze feature file " + (session_dir / rel).string());
  if (!fs::exists(session_dir / m.gaze_file))
    fail(Errc::io_error, "missing gaze file " + (session_dir / m.gaze_file).string());
  return m;
}

void save_session_manifest(const fs::path& session_dir, const SessionManifest& m) {
  json j;
  j["d"] = m.descriptor_dim;
  j["frame_rate_hz"] = m.frame_rate_hz;
  j["scene_intrinsics"] = intrinsics_json(m.scene_intr);
  j["rgbd_intrinsics"] = intrinsics_json(m.rgbd_intr);
  j["grid"] = {{"dims", {m.grid.dims[0], m.grid.dims[1], m.grid.dims[2]}},
               {"origin", vec3_json(m.grid.origin)},
               {"resolution", m.grid.resolution}};
  j["mapping"] = {{"depth", m.mapping_depth}, {"features", m.mapping_features}};
  j["gaze"] = {{"features", m.gaze_features}, {"gaze_file", m.gaze_file}};
  write_atomic(session_dir / "manifest.json", j.dump() + "\n");
}

void save_map(const fs::path& path, const SparseMap& map) {
  json j;
  j["d"] = map.descriptor_dim;
  json landmarks = json::array();
  for (const auto& lm : map.landmarks) {
    json desc = json::array();
    for (int i = 0; i < lm.descriptor.size(); ++i) desc.push_back(lm.descriptor(i));
    landmarks.push_back({{"desc", std::move(desc)}, {"id", lm.id}, {"xyz", vec3_json(lm.position)}});
  }
  j["landmarks"] = std::move(landmarks);
  json keyframes = json::array();
  for (const auto& kf : map.keyframes) {
    json links = json::array();
    for (const auto& [kp, lm] : kf.landmark_links) links.push_back(json::array({kp, lm}));
    keyframes.push_back({{"id", kf.id}, {"links", std::move(links)}, {"pose", pose7_json(kf.pose7)}});
  }
  j["keyframes"] = std::move(keyframes);

  const std::string text = j.dump();
  char crc[16];
  std::snprintf(crc, sizeof(crc), "%08x", crc32_bytes(text));
  write_atomic(path, text + "\n" + crc + "\n");
}

SparseMap load_map(const fs::path& path) {
  const std::string raw = read_file(path);
  const auto lines = split_lines(raw);
  if (lines.size() < 2) fail(Errc::io_error, path.string() + ": expected JSON plus CRC line");
  const std::string& crc_line = lines.back();
  std::string text;
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
    if (i) text += '\n';
    text += lines[i];
  }
  char expect[16];
  std::snprintf(expect, sizeof(expect), "%08x", crc32_bytes(text));
  if (crc_line != expect) fail(Errc::bad_checksum, path.string() + ": CRC mismatch");

  const json j = parse_json(text, path);
  SparseMap map;
  map.descriptor_dim = require(j, "d", path).get<int>();
  for (const auto& lj : require(j, "landmarks", path)) {
    Landmark lm;
    lm.id = require(lj, "id", path).get<std::int64_t>();
    lm.position = vec3_from(require(lj, "xyz", path), path);
    const json& desc = require(lj, "desc", path);
    lm.descriptor.resize(static_cast<int>(desc.size()));
    for (std::size_t i = 0; i < desc.size(); ++i)
      lm.descriptor(static_cast<int>(i)) = desc[i].get<double>();
    if (lm.descriptor.size() != map.descriptor_dim)
      fail(Errc::io_error, path.string() + ": landmark descriptor dimension mismatch");
    map.landmarks.push_back(std::move(lm));
  }
  for (const auto& kj : require(j, "keyframes", path)) {
    Keyframe kf;
    kf.id = require(kj, "id", path).get<std::int64_t>();
    kf.pose7 = pose7_from(require(kj, "pose", path), path);
    kf.pose = pose_from_array(kf.pose7);
    for (const auto& link : require(kj, "links", path)) {
      if (!link.is_array() || link.size() != 2)
        fail(Errc::io_error, path.string() + ": expected [keypoint_index, landmark_id] link");
      kf.landmark_links.emplace_back(link[0].get<int>(), link[1].get<std::int64_t>());
    }
    map.keyframes.push_back(std::move(kf));
  }
  map = remap_landmark_index(std::move(map));
  for (const auto& kf : map.keyframes)
    for (const auto& [kp, lm] : kf.landmark_links)
      if (!map.find_landmark(lm))
        fail(Errc::io_error, path.string() + ": keyframe " + std::to_string(kf.id) +
                                 " links to unknown landmark " + std::to_string(lm));
  return map;
}

void save_grid(const fs::path& path, const GridData& grid) {
  const std::size_t n =
      static_cast<std::size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2];
  if (grid.values.size() != n) fail(Errc::io_error, "grid value count does not match dims");
  std::string buf;
  buf.reserve(48 + 4 * n);
  buf += "G3DG";
  put_u32(buf, 1);
  put_f64(buf, grid.origin.x());
  put_f64(buf, grid.origin.y());
  put_f64(buf, grid.origin.z());
  put_f64(buf, grid.resolution);
  put_u32(buf, static_cast<std::uint32_t>(grid.dims[0]));
  put_u32(buf, static_cast<std::uint32_t>(grid.dims[1]));
  put_u32(buf, static_cast<std::uint32_t>(grid.dims[2]));
  for (float v : grid.values) put_f32(buf, v);
  put_u32(buf, crc32_bytes(buf));
  write_atomic(path, buf);
}

GridData load_grid(const fs::path& path) {
  const std::string raw = read_file(path);
  if (raw.size() < 8 + 4 + 32 + 12 + 4 - 8)  // magic+version+geometry+dims+crc
    fail(Errc::io_error, path.string() + ": truncated grid file");
  const std::string body = raw.substr(0, raw.size() - 4);
  ByteReader footer{raw, raw.size() - 4, path};
  if (footer.u32() != crc32_bytes(body)) fail(Errc::bad_checksum, path.string() + ": CRC mismatch");

  ByteReader r{raw, 0, path};
  r.need(4);
  if (raw.substr(0, 4) != "G3DG") fail(Errc::io_error, path.string() + ": bad magic");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != 1) fail(Errc::io_error, path.string() + ": unsupported grid version");
  GridData grid;
  grid.origin = Vec3(r.f64(), r.f64(), r.f64());
  grid.resolution = r.f64();
  grid.dims = {static_cast<int>(r.u32()), static_cast<int>(r.u32()), static_cast<int>(r.u32())};
  if (grid.dims[0] < 1 || grid.dims[1] < 1 || grid.dims[2] < 1 || grid.resolution <= 0.0)
    fail(Errc::io_error, path.string() + ": invalid grid geometry");
  const std::size_t n =
      static_cast<std::size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2];
  grid.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) grid.values[i] = r.f32();
  return grid;
}

GridData to_grid_data(const OccupancyGrid& grid) {
  GridData data;
  data.origin = grid.origin();
  data.resolution = grid.resolution();
  data.dims = grid.dims();
  data.values = grid.values();
  return data;
}

OccupancyGrid to_occupancy_grid(const GridData& data, const OccupancyParams& params) {
  OccupancyGrid grid(data.origin, data.resolution, data.dims, params);
  grid.values() = data.values;
  return grid;
}

GridData to_grid_data(const SaliencyGrid& grid) {
  GridData data;
  data.origin = grid.origin;
  data.resolution = grid.resolution;
  data.dims = grid.dims;
  data.values.reserve(grid.mass.size());
  for (double m : grid.mass) data.values.push_back(static_cast<float>(m));
  return data;
}

void save_gaze3d(const fs::path& path, const std::vector<GazePoint3D>& points) {
  std::string text;
  for (const auto& p : points) {
    json j;
    j["status"] = gaze_status_name(p.status);
    j["t_ms"] = p.t_ms;
    if (p.has_ray) j["ray"] = ray_json(p.ray);
    if (p.status == GazeStatus::Hit) j["point"] = vec3_json(p.point);
    if (p.frame_pose) j["frame_pose"] = pose7_json(*p.frame_pose);
    text += j.dump();
    text += '\n';
  }
  write_atomic(path, text);
}

std::vector<GazePoint3D> load_gaze3d(const fs::path& path) {
  std::vector<GazePoint3D> out;
  for (const auto& line : split_lines(read_file(path))) {
    const json j = parse_json(line, path);
    GazePoint3D p;
    p.t_ms = require(j, "t_ms", path).get<std::int64_t>();
    const auto status = gaze_status_from_name(require(j, "status", path).get<std::string>());
    if (!status) fail(Errc::io_error, path.string() + ": unknown status value");
    p.status = *status;
    if (j.contains("ray")) {
      p.ray = ray_from(j["ray"], path);
      p.has_ray = true;
    }
    if (j.contains("point")) p.point = vec3_from(j["point"], path);
    if (j.contains("frame_pose")) {
      p.frame_pose = pose7_from(j["frame_pose"], path);
      p.frame_localized = true;
    }
    out.push_back(p);
  }
  return out;
}

void save_poses(const fs::path& path, const std::vector<LocalizedFrame>& frames) {
  std::string text;
  for (const auto& f : frames) {
    json j;
    j["frame"] = f.frame_index;
    if (f.status == FrameStatus::Localized) {
      j["status"] = "localized";
      j["pose"] = pose7_json(pose_to_array(f.pose));
      j["inliers"] = f.inlier_count;
      j["rmse_px"] = f.rmse_px;
    } else {
      j["status"] = "lost";
    }
    text += j.dump();
    text += '\n';
  }
  write_atomic(path, text);
}

void save_truth(const fs::path& path, const std::vector<SampleTruth>& truth) {
  std::string text;
  for (const auto& t : truth) {
    json j;
    j["frame"] = t.frame_index;
    j["gaze_px_true"] = vec2_json(t.gaze_px_true);
    j["ray"] = ray_json(t.ray);
    if (t.point) j["point"] = vec3_json(*t.point);
    j["t_ms"] = t.t_ms;
    text += j.dump();
    text += '\n';
  }
  write_atomic(path, text);
}

std::vector<SampleTruth> load_truth(const fs::path& path) {
  std::vector<SampleTruth> out;
  for (const auto& line : split_lines(read_file(path))) {
    const json j = parse_json(line, path);
    SampleTruth t;
    t.t_ms = require(j, "t_ms", path).get<std::int64_t>();
    t.frame_index = require(j, "frame", path).get<int>();
    t.gaze_px_true = vec2_from(require(j, "gaze_px_true", path), path);
    t.ray = ray_from(require(j, "ray", path), path);
    if (j.contains("point")) t.point = vec3_from(j["point"], path);
    out.push_back(t);
  }
  return out;
}

void save_rois(const fs::path& path, const std::vector<ROI3D>& rois) {
  json arr = json::array();
  for (const auto& r : rois) {
    json poly = json::array();
    for (const auto& p : r.polygon) poly.push_back(vec3_json(p));
    arr.push_back({{"label", r.roi_label},
                   {"normal", vec3_json(r.normal)},
                   {"polygon", std::move(poly)},
                   {"support_count", r.support_count}});
  }
  write_atomic(path, json{{"rois", std::move(arr)}}.dump() + "\n");
}

std::vector<ROI3D> load_rois(const fs::path& path) {
  const json j = load_json_file(path);
  std::vector<ROI3D> out;
  for (const auto& rj : require(j, "rois", path)) {
    ROI3D r;
    r.roi_label = require(rj, "label", path).get<std::string>();
    r.normal = vec3_from(require(rj, "normal", path), path);
    const json& poly = require(rj, "polygon", path);
    if (poly.size() != 4) fail(Errc::io_error, path.string() + ": ROI polygon must have 4 points");
    for (int i = 0; i < 4; ++i) r.polygon[i] = vec3_from(poly[i], path);
    r.support_count = require(rj, "support_count", path).get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ReferenceAppearance> load_references(const fs::path& refs_dir) {
  const fs::path path = refs_dir / "manifest.json";
  const json j = load_json_file(path);
  std::vector<ReferenceAppearance> out;
  for (const auto& rj : require(j, "references", path)) {
    ReferenceAppearance ref;
    ref.roi_label = require(rj, "label", path).get<std::string>();
    ref.reference_size = vec2_from(require(rj, "size", path), path);
    const std::string file = require(rj, "file", path).get<std::string>();
    const FeatureFrame frame = load_feature_file(refs_dir / file);
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
      Keypoint kp;
      kp.pixel = frame.pixels[i];
      kp.descriptor = frame.descriptors[i];
      if (i < frame.landmark_ids.size()) kp.landmark_id = frame.landmark_ids[i];
      ref.keypoints.push_back(std::move(kp));
    }
    out.push_back(std::move(ref));
  }
  return out;
}

void save_references(const fs::path& refs_dir, const std::vector<ReferenceAppearance>& refs) {
  json arr = json::array();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::string file = "ref_" + refs[i].roi_label + ".json";
    FeatureFrame frame;
    frame.frame_index = static_cast<int>(i);
    for (const auto& kp : refs[i].keypoints) {
      frame.pixels.push_back(kp.pixel);
      frame.descriptors.push_back(kp.descriptor);
      frame.landmark_ids.push_back(kp.landmark_id);
    }
    save_feature_file(refs_dir / file, frame);
    arr.push_back({{"file", file},
                   {"label", refs[i].roi_label},
                   {"size", vec2_json(refs[i].reference_size)}});
  }
  write_atomic(refs_dir / "manifest.json", json{{"references", std::move(arr)}}.dump() + "\n");
}

void save_report_csv(const fs::path& path, const AttentionReport& report) {
  std::string text =
      "roi_label,total_dwell_ms,dwell_count,aoi_hit_count,fixation_count,"
      "recognition_capable_fixations\n";
  for (const auto& r : report.rois) {
    text += r.roi_label;
    text += ',';
    text += format_double(r.total_dwell_ms);
    text += ',';
    text += std::to_string(r.dwell_count);
    text += ',';
    text += std::to_string(r.aoi_hit_count);
    text += ',';
    text += std::to_string(r.fixation_count);
    text += ',';
    text += std::to_string(r.recognition_capable_fixations);
    text += '\n';
  }
  write_atomic(path, text);
}

void save_report_json(const fs::path& path, const AttentionReport& report) {
  json rois = json::array();
  for (const auto& r : report.rois) {
    rois.push_back({{"aoi_hit_count", r.aoi_hit_count},
                    {"dwell_count", r.dwell_count},
                    {"fixation_count", r.fixation_count},
                    {"recognition_capable_fixations", r.recognition_capable_fixations},
                    {"roi_label", r.roi_label},
                    {"total_dwell_ms", r.total_dwell_ms}});
  }
  json j = {{"rois", std::move(rois)},
            {"totals",
             {{"fixation_count", report.fixation_count},
              {"fixation_rate_hz", report.fixation_rate_hz},
              {"hit_pct", report.hit_pct},
              {"hit_samples", report.hit_samples},
              {"localized_pct", report.localized_pct},
              {"total_samples", report.total_samples}}}};
  write_atomic(path, j.dump() + "\n");
}

AttentionReport load_report_json(const fs::path& path) {
  const json j = load_json_file(path);
  AttentionReport report;
  for (const auto& rj : require(j, "rois", path)) {
    RoiStats r;
    r.roi_label = require(rj, "roi_label", path).get<std::string>();
    r.total_dwell_ms = require(rj, "total_dwell_ms", path).get<double>();
    r.dwell_count = require(rj, "dwell_count", path).get<int>();
    r.aoi_hit_count = require(rj, "aoi_hit_count", path).get<int>();
    r.fixation_count = require(rj, "fixation_count", path).get<int>();
    r.recognition_capable_fixations = require(rj, "recognition_capable_fixations", path).get<int>();
    report.rois.push_back(std::move(r));
  }
  const json& totals = require(j, "totals", path);
  report.fixation_count = require(totals, "fixation_count", path).get<int>();
  report.fixation_rate_hz = require(totals, "fixation_rate_hz", path).get<double>();
  report.hit_pct = require(totals, "hit_pct", path).get<double>();
  report.hit_samples = require(totals, "hit_samples", path).get<int>();
  report.localized_pct = require(totals, "localized_pct", path).get<double>();
  report.total_samples = require(totals, "total_samples", path).get<int>();
  return report;
}

void save_metrics(const fs::path& path, const EvalMetrics& m) {
  json j = {{"hit_pct", m.hit_pct},
            {"hits", m.hits},
            {"localized_pct", m.localized_pct},
            {"mean_3d_m", m.mean_3d_m},
            {"mean_angular_deg", m.mean_angular_deg},
            {"median_3d_m", m.median_3d_m},
            {"median_angular_deg", m.median_angular_deg},
            {"samples", m.samples}};
  write_atomic(path, j.dump() + "\n");
}

namespace {

TrajectorySpec trajectory_from(const json& j, const fs::path& path) {
  TrajectorySpec traj;
  traj.frame_count = require(j, "frames", path).get<int>();
  traj.frame_rate_hz = require(j, "frame_rate_hz", path).get<double>();
  for (const auto& wp : require(j, "waypoints", path))
    traj.waypoints.push_back(pose_from_array(pose7_from(wp, path)));
  if (traj.waypoints.size() < 2)
    fail(Errc::invalid_spec, path.string() + ": trajectory needs >= 2 waypoints");
  if (traj.frame_count < 1) fail(Errc::invalid_spec, path.string() + ": frames must be >= 1");
  if (!(traj.frame_rate_hz > 0)) fail(Errc::invalid_spec, path.string() + ": bad frame rate");
  return traj;
}

}  // namespace

SceneSpec load_scene_spec(const fs::path& path) {
  const json j = load_json_file(path);
  SceneSpec spec;
  try {
    spec.seed = require(j, "seed", path).get<std::uint64_t>();
    spec.descriptor_dim = require(j, "descriptor_dim", path).get<int>();
    const json& grid = require(j, "grid", path);
    spec.grid.origin = vec3_from(require(grid, "origin", path), path);
    spec.grid.resolution = require(grid, "resolution", path).get<double>();
    const json& dims = require(grid, "dims", path);
    if (dims.size() != 3) fail(Errc::invalid_spec, path.string() + ": grid dims must be [nx,ny,nz]");
    spec.grid.dims = {dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>()};
    spec.scene_intr = intrinsics_from(require(j, "scene_intrinsics", path), path);
    spec.rgbd_intr = intrinsics_from(require(j, "rgbd_intrinsics", path), path);
    for (const auto& pj : require(j, "patches", path)) {
      PatchSpec p;
      p.origin = vec3_from(require(pj, "origin", path), path);
      p.u = vec3_from(require(pj, "u", path), path);
      p.v = vec3_from(require(pj, "v", path), path);
      p.density = require(pj, "density", path).get<double>();
      if (pj.contains("roi_label")) p.roi_label = pj["roi_label"].get<std::string>();
      spec.patches.push_back(std::move(p));
    }
    spec.mapping_trajectory = trajectory_from(require(j, "mapping_trajectory", path), path);
    spec.gaze_trajectory = trajectory_from(require(j, "gaze_trajectory", path), path);
    for (const auto& ej : require(j, "gaze_script", path)) {
      GazeScriptEntry e;
      e.t0_ms = require(ej, "t0_ms", path).get<std::int64_t>();
      e.t1_ms = require(ej, "t1_ms", path).get<std::int64_t>();
      e.target = vec3_from(require(ej, "target", path), path);
      if (e.t1_ms < e.t0_ms) fail(Errc::invalid_spec, path.string() + ": script entry t1 < t0");
      spec.gaze_script.push_back(e);
    }
    if (j.contains("noise")) {
      const json& n = j["noise"];
      if (n.contains("keypoint_px_sigma")) spec.noise.keypoint_px_sigma = n["keypoint_px_sigma"].get<double>();
      if (n.contains("depth_sigma_m")) spec.noise.depth_sigma_m = n["depth_sigma_m"].get<double>();
      if (n.contains("gaze_deg_sigma")) spec.noise.gaze_deg_sigma = n["gaze_deg_sigma"].get<double>();
      if (n.contains("detection_dropout")) spec.noise.detection_dropout = n["detection_dropout"].get<double>();
    }
    if (j.contains("depth_stride_px")) spec.depth_stride_px = j["depth_stride_px"].get<int>();
    if (j.contains("reference_size")) spec.reference_size = vec2_from(j["reference_size"], path);
  } catch (const json::exception& e) {
    fail(Errc::invalid_spec, path.string() + ": " + e.what());
  }
  if (spec.depth_stride_px < 1) fail(Errc::invalid_spec, path.string() + ": bad depth stride");
  return spec;
}

std::string example_scene_spec_json() {
  // Desk-scale scene: a back wall two meters out with two logo patches a hair
  // in front of it, plus two side walls. Plane offsets sit a few millimeters
  // past voxel boundaries so surface voxels stay crisp under depth noise.
  json j;
  j["seed"] = 20210907;
  j["descriptor_dim"] = 32;
  j["grid"] = {{"dims", {180, 130, 110}},
               {"origin", {-1.8, -1.3, -0.1}},
               {"resolution", 0.02}};
  j["scene_intrinsics"] = {{"cx", 640.0}, {"cy", 480.0}, {"fx", 850.0},
                           {"fy", 850.0}, {"height", 960}, {"width", 1280}};
  j["rgbd_intrinsics"] = {{"cx", 320.0}, {"cy", 240.0}, {"fx", 600.0},
                          {"fy", 600.0}, {"height", 480}, {"width", 640}};
  j["patches"] = json::array({
      {{"density", 60.0}, {"origin", {-1.7, -1.2, 2.004}}, {"u", {0.0, 2.4, 0.0}}, {"v", {3.4, 0.0, 0.0}}},
      {{"density", 30.0}, {"origin", {1.704, -1.2, 0.3}}, {"u", {0.0, 0.0, 1.7}}, {"v", {0.0, 2.4, 0.0}}},
      {{"density", 30.0}, {"origin", {-1.704, -1.2, 0.3}}, {"u", {0.0, 2.4, 0.0}}, {"v", {0.0, 0.0, 1.7}}},
      {{"density", 300.0}, {"origin", {-0.75, 0.0, 2.002}}, {"roi_label", "logo_alpha"},
       {"u", {0.0, 0.3, 0.0}}, {"v", {0.4, 0.0, 0.0}}},
      {{"density", 300.0}, {"origin", {0.35, 0.0, 2.002}}, {"roi_label", "logo_beta"},
       {"u", {0.0, 0.3, 0.0}}, {"v", {0.4, 0.0, 0.0}}},
  });
  j["mapping_trajectory"] = {
      {"frame_rate_hz", 30.0},
      {"frames", 40},
      {"waypoints", json::array({
                        {1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
                        {0.976296007119933, 0.0, -0.216439613938103, 0.0, -1.0, 0.0, 0.3},
                        {0.976296007119933, 0.0, 0.216439613938103, 0.0, 1.0, 0.0, 0.6},
                        {1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9},
                    })}};
  j["gaze_trajectory"] = {
      {"frame_rate_hz", 30.0},
      {"frames", 120},
      {"waypoints",
       json::array({
           {1.0, 0.0, 0.0, 0.0, -0.05, -0.02, 0.95},
           {0.9998476951563913, 0.0, 0.0174524064372835, 0.0, 0.05, 0.02, 1.0},
           {0.9999143275740073, 0.0, -0.0130895955713444, 0.0, -0.02, 0.0, 1.05},
       })}};
  j["gaze_script"] = json::array({
      {{"t0_ms", 0}, {"t1_ms", 700}, {"target", {0.0, 0.1, 2.004}}},
      {{"t0_ms", 800}, {"t1_ms", 1500}, {"target", {-0.55, 0.15, 2.002}}},
      {{"t0_ms", 1600}, {"t1_ms", 2300}, {"target", {0.0, -0.25, 2.004}}},
      {{"t0_ms", 2400}, {"t1_ms", 3100}, {"target", {0.55, 0.15, 2.002}}},
      {{"t0_ms", 3200}, {"t1_ms", 3960}, {"target", {-0.15, 0.35, 2.004}}},
  });
  j["noise"] = {{"depth_sigma_m", 0.005},
                {"detection_dropout", 0.0},
                {"gaze_deg_sigma", 0.5},
                {"keypoint_px_sigma", 0.5}};
  j["depth_stride_px"] = 4;
  j["reference_size"] = {200.0, 150.0};
  return j.dump(2) + "\n";
}

PipelineConfig load_config(const fs::path& path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;
  const json j = load_json_file(path);
  try {
    if (j.contains("pnp")) {
      const json& p = j["pnp"];
      if (p.contains("ransac_iterations")) cfg.pnp.ransac_iterations = p["ransac_iterations"].get<int>();
      if (p.contains("inlier_threshold_px")) cfg.pnp.inlier_threshold_px = p["inlier_threshold_px"].get<double>();
      if (p.contains("min_inliers")) cfg.pnp.min_inliers = p["min_inliers"].get<int>();
      if (p.contains("refine_max_iterations")) cfg.pnp.refine_max_iterations = p["refine_max_iterations"].get<int>();
      if (p.contains("refine_convergence_px")) cfg.pnp.refine_convergence_px = p["refine_convergence_px"].get<double>();
      if (p.contains("seed")) cfg.pnp.seed = p["seed"].get<std::uint64_t>();
    }
    if (j.contains("keyframe")) {
      const json& k = j["keyframe"];
      if (k.contains("min_translation_m")) cfg.keyframe.min_translation_m = k["min_translation_m"].get<double>();
      if (k.contains("min_rotation_deg")) cfg.keyframe.min_rotation_deg = k["min_rotation_deg"].get<double>();
      if (k.contains("min_inlier_ratio")) cfg.keyframe.min_inlier_ratio = k["min_inlier_ratio"].get<double>();
    }
    if (j.contains("max_range_m")) cfg.max_range_m = j["max_range_m"].get<double>();
    if (j.contains("fixation_dispersion_deg")) cfg.fixation_dispersion_deg = j["fixation_dispersion_deg"].get<double>();
    if (j.contains("fixation_min_duration_ms")) cfg.fixation_min_duration_ms = j["fixation_min_duration_ms"].get<std::int64_t>();
    if (j.contains("aoi_tolerance_m")) cfg.aoi_tolerance_m = j["aoi_tolerance_m"].get<double>();
    if (j.contains("dwell_max_gap_ms")) cfg.dwell_max_gap_ms = j["dwell_max_gap_ms"].get<double>();
    if (j.contains("saliency_sigma_m")) cfg.saliency_sigma_m = j["saliency_sigma_m"].get<double>();
    if (j.contains("saliency_duration_weighted")) cfg.saliency_duration_weighted = j["saliency_duration_weighted"].get<bool>();
    if (j.contains("tree")) {
      const json& t = j["tree"];
      if (t.contains("k")) cfg.tree_k = t["k"].get<int>();
      if (t.contains("levels")) cfg.tree_levels = t["levels"].get<int>();
    }
    if (j.contains("roi")) {
      const json& r = j["roi"];
      if (r.contains("top_n")) cfg.roi.top_n = r["top_n"].get<int>();
      if (r.contains("ratio_threshold")) cfg.roi.ratio_threshold = r["ratio_threshold"].get<double>();
      if (r.contains("ransac_threshold_px")) cfg.roi.ransac_threshold_px = r["ransac_threshold_px"].get<double>();
      if (r.contains("ransac_iterations")) cfg.roi.ransac_iterations = r["ransac_iterations"].get<int>();
      if (r.contains("min_inliers")) cfg.roi.min_inliers = r["min_inliers"].get<int>();
      if (r.contains("min_area_px2")) cfg.roi.min_area_px2 = r["min_area_px2"].get<double>();
      if (r.contains("seed")) cfg.roi.seed = r["seed"].get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    fail(Errc::io_error, path.string() + ": " + e.what());
  }
  return cfg;
}

}  // namespace gaze3d::io
