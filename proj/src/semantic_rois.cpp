#include "gaze3d/semantic_rois.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gaze3d/rng.hpp"

namespace gaze3d {

namespace {

// Hartley normalization: centroid to origin, mean distance sqrt(2).
Mat3 normalizing_transform(const std::vector<Vec2>& pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 T;
  T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return T;
}

Vec2 apply_h(const Mat3& H, const Vec2& p) {
  const Vec3 q = H * Vec3(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

std::optional<Mat3> solve_dlt(const std::vector<std::pair<Vec2, Vec2>>& pairs,
                              const std::vector<int>& subset) {
  std::vector<Vec2> src, dst;
  src.reserve(subset.size());
  dst.reserve(subset.size());
  for (int i : subset) {
    src.push_back(pairs[i].first);
    dst.push_back(pairs[i].second);
  }
  const Mat3 Ts = normalizing_transform(src);
  const Mat3 Td = normalizing_transform(dst);

  Eigen::MatrixXd A(2 * subset.size(), 9);
  for (std::size_t r = 0; r < subset.size(); ++r) {
    const Vec2 s = apply_h(Ts, src[r]);
    const Vec2 d = apply_h(Td, dst[r]);
    A.row(2 * r) << 0, 0, 0, -s.x(), -s.y(), -1, d.y() * s.x(), d.y() * s.y(), d.y();
    A.row(2 * r + 1) << s.x(), s.y(), 1, 0, 0, 0, -d.x() * s.x(), -d.x() * s.y(), -d.x();
  }
  // Full V: with the minimal 4-pair sample the thin factorization has only
  // 8 columns and would drop the null-space vector.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 H = Td.inverse() * Hn * Ts;
  if (std::abs(H(2, 2)) < 1e-12) return std::nullopt;
  H /= H(2, 2);
  return H;
}

bool collinear_triple_present(const std::vector<Vec2>& pts) {
  for (std::size_t a = 0; a + 2 < pts.size() + 0; ++a)
    for (std::size_t b = a + 1; b + 1 < pts.size(); ++b)
      for (std::size_t c = b + 1; c < pts.size(); ++c) {
        const Vec2 ab = pts[b] - pts[a];
        const Vec2 ac = pts[c] - pts[a];
        if (std::abs(ab.x() * ac.y() - ab.y() * ac.x()) < 1e-9) return true;
      }
  return false;
}

// Symmetric transfer error: the larger of the forward and backward pixel
// distances.
double transfer_error(const Mat3& H, const Mat3& Hinv, const std::pair<Vec2, Vec2>& pair) {
  const double fwd = (apply_h(H, pair.first) - pair.second).norm();
  const double bwd = (apply_h(Hinv, pair.second) - pair.first).norm();
  return std::max(fwd, bwd);
}

}  // namespace

HomographyResult homography_dlt_ransac(const std::vector<std::pair<Vec2, Vec2>>& pairs,
                                       double threshold_px, std::uint64_t seed, int iterations) {
  const int n = static_cast<int>(pairs.size());
  if (n < 4) fail(Errc::insufficient_pairs, "homography needs at least 4 pairs");
  constexpr int kMinConsensus = 8;

  Rng rng(seed);
  std::vector<int> idx(n);

  auto evaluate = [&](const Mat3& H, std::vector<std::uint8_t>& mask) -> int {
    const Mat3 Hinv = H.inverse();
    if (!Hinv.allFinite()) return -1;
    mask.assign(n, 0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (transfer_error(H, Hinv, pairs[i]) < threshold_px) {
        mask[i] = 1;
        ++count;
      }
    }
    return count;
  };

  int best_count = -1;
  Mat3 best_H = Mat3::Identity();
  std::vector<std::uint8_t> mask;
  for (int it = 0; it < iterations; ++it) {
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> sample(4);
    for (int k = 0; k < 4; ++k) {
      const std::size_t j = k + rng.uniform_index(n - k);
      std::swap(idx[k], idx[j]);
      sample[k] = idx[k];
    }
    std::vector<Vec2> src, dst;
    for (int i : sample) {
      src.push_back(pairs[i].first);
      dst.push_back(pairs[i].second);
    }
    if (collinear_triple_present(src) || collinear_triple_present(dst)) continue;
    const auto H = solve_dlt(pairs, sample);
    if (!H) continue;
    const int count = evaluate(*H, mask);
    if (count > best_count) {
      best_count = count;
      best_H = *H;
    }
  }
  if (best_count < kMinConsensus) fail(Errc::no_consensus, "homography consensus below 8 inliers");

  evaluate(best_H, mask);
  std::vector<int> inliers;
  for (int i = 0; i < n; ++i)
    if (mask[i]) inliers.push_back(i);
  const auto refined = solve_dlt(pairs, inliers);

  HomographyResult out;
  out.H = refined ? *refined : best_H;
  out.inlier_count = evaluate(out.H, out.inlier_mask);
  if (out.inlier_count < kMinConsensus)
    fail(Errc::no_consensus, "inlier count fell below 8 after re-estimation");
  return out;
}

bool quad_convex(const std::array<Vec2, 4>& quad) {
  double sign = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = quad[(i + 1) % 4] - quad[i];
    const Vec2 b = quad[(i + 2) % 4] - quad[(i + 1) % 4];
    const double cross = a.x() * b.y() - a.y() * b.x();
    if (cross == 0.0) return false;
    if (sign == 0.0)
      sign = cross;
    else if (sign * cross < 0.0)
      return false;
  }
  return true;
}

double quad_area(const std::array<Vec2, 4>& quad) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2& a = quad[i];
    const Vec2& b = quad[(i + 1) % 4];
    acc += a.x() * b.y() - b.x() * a.y();
  }
  return std::abs(acc) * 0.5;
}

ReferenceIndex::ReferenceIndex(std::vector<ReferenceAppearance> refs, int k, int levels,
                               std::uint64_t seed)
    : refs_(std::move(refs)) {
  std::vector<Descriptor> all;
  for (const auto& r : refs_) {
    if (r.keypoints.size() < 8)
      fail(Errc::invalid_spec, "reference '" + r.roi_label + "' has fewer than 8 keypoints");
    for (const auto& kp : r.keypoints) all.push_back(kp.descriptor);
  }
  tree_ = VocabularyTree::build(all, k, levels, seed);
  for (std::size_t i = 0; i < refs_.size(); ++i) {
    std::vector<Descriptor> descs;
    for (const auto& kp : refs_[i].keypoints) descs.push_back(kp.descriptor);
    tree_.add_image(static_cast<std::int64_t>(i), descs);
  }
}

std::vector<RoiDetection> ReferenceIndex::detect(const std::vector<Keypoint>& frame_keypoints,
                                                 int frame_index,
                                                 const RoiDetectConfig& cfg) const {
  std::vector<RoiDetection> detections;
  if (frame_keypoints.empty()) return detections;

  std::vector<Descriptor> frame_descs;
  frame_descs.reserve(frame_keypoints.size());
  for (const auto& kp : frame_keypoints) frame_descs.push_back(kp.descriptor);

  const auto shortlist = tree_.query_image(frame_descs, cfg.top_n);
  for (const auto& [ref_id, score] : shortlist) {
    const ReferenceAppearance& ref = refs_[static_cast<std::size_t>(ref_id)];
    std::vector<Descriptor> ref_descs;
    ref_descs.reserve(ref.keypoints.size());
    for (const auto& kp : ref.keypoints) ref_descs.push_back(kp.descriptor);

    const auto matches = match_descriptors(ref_descs, frame_descs, cfg.ratio_threshold);
    if (static_cast<int>(matches.size()) < 4) continue;
    std::vector<std::pair<Vec2, Vec2>> pairs;
    pairs.reserve(matches.size());
    for (const auto& m : matches)
      pairs.emplace_back(ref.keypoints[m.query_index].pixel, frame_keypoints[m.train_index].pixel);

    HomographyResult hres;
    try {
      hres = homography_dlt_ransac(pairs, cfg.ransac_threshold_px,
                                   mix_seed(cfg.seed, splitmix64(frame_index) ^ ref_id),
                                   cfg.ransac_iterations);
    } catch (const Error& e) {
      if (e.code() == Errc::no_consensus || e.code() == Errc::insufficient_pairs) continue;
      throw;
    }
    if (hres.inlier_count < cfg.min_inliers) continue;

    RoiDetection det;
    det.roi_label = ref.roi_label;
    det.frame_index = frame_index;
    det.homography = hres.H;
    det.inlier_count = hres.inlier_count;
    const double w = ref.reference_size.x();
    const double h = ref.reference_size.y();
    const std::array<Vec2, 4> corners = {Vec2(0, 0), Vec2(w, 0), Vec2(w, h), Vec2(0, h)};
    for (int i = 0; i < 4; ++i) det.corner_quad[i] = apply_h(hres.H, corners[i]);

    if (!quad_convex(det.corner_quad)) continue;
    if (quad_area(det.corner_quad) < cfg.min_area_px2) continue;
    detections.push_back(std::move(det));
  }
  std::stable_sort(detections.begin(), detections.end(),
                   [](const RoiDetection& a, const RoiDetection& b) {
                     return a.roi_label < b.roi_label;
                   });
  return detections;
}

std::optional<ROI3D> lift_roi(const RoiDetection& detection, const Pose& frame_pose,
                              const CameraIntrinsics& intr, const OccupancyGrid& grid,
                              double max_range, double plane_tol_m) {
  std::array<Vec3, 4> hits;
  for (int i = 0; i < 4; ++i) {
    if (!intr.contains(detection.corner_quad[i])) return std::nullopt;
    const Ray ray = pixel_to_ray(intr, frame_pose, detection.corner_quad[i]);
    const auto hit = grid.cast_ray(ray, max_range);
    if (!hit) return std::nullopt;
    hits[i] = hit->point;
  }

  Vec3 centroid = Vec3::Zero();
  for (const auto& h : hits) centroid += h;
  centroid /= 4.0;
  Mat3 scatter = Mat3::Zero();
  for (const auto& h : hits) {
    const Vec3 d = h - centroid;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  Vec3 normal = eig.eigenvectors().col(0);  // smallest eigenvalue
  normal.normalize();

  double max_dist = 0.0;
  for (const auto& h : hits) max_dist = std::max(max_dist, std::abs(normal.dot(h - centroid)));
  if (max_dist > plane_tol_m) return std::nullopt;

  if (normal.dot(frame_pose.t - centroid) < 0.0) normal = -normal;

  ROI3D roi;
  roi.roi_label = detection.roi_label;
  roi.normal = normal;
  for (int i = 0; i < 4; ++i) hits[i] -= normal.dot(hits[i] - centroid) * normal;
  roi.polygon = hits;
  roi.support_count = 1;
  return roi;
}

namespace {

Vec3 polygon_centroid(const std::array<Vec3, 4>& poly) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : poly) c += p;
  return c / 4.0;
}

// Cyclic shift of `poly` best aligned with `anchor`.
std::array<Vec3, 4> align_cyclic(const std::array<Vec3, 4>& anchor,
                                 const std::array<Vec3, 4>& poly) {
  int best_shift = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 4; ++s) {
    double cost = 0.0;
    for (int i = 0; i < 4; ++i) cost += (anchor[i] - poly[(i + s) % 4]).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best_shift = s;
    }
  }
  std::array<Vec3, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = poly[(i + best_shift) % 4];
  return out;
}

}  // namespace

std::vector<ROI3D> merge_rois(const std::vector<ROI3D>& rois, double cluster_dist_m) {
  struct Cluster {
    std::array<Vec3, 4> corners;
    Vec3 normal_sum;
    int weight = 0;
  };

  // Stable label order, then greedy centroid clustering within each label.
  std::vector<std::string> labels;
  for (const auto& r : rois)
    if (std::find(labels.begin(), labels.end(), r.roi_label) == labels.end())
      labels.push_back(r.roi_label);
  std::sort(labels.begin(), labels.end());

  std::vector<ROI3D> merged;
  for (const auto& label : labels) {
    std::vector<Cluster> clusters;
    for (const auto& r : rois) {
      if (r.roi_label != label) continue;
      const Vec3 c = polygon_centroid(r.polygon);
      Cluster* target = nullptr;
      for (auto& cl : clusters) {
        if ((polygon_centroid(cl.corners) - c).norm() < cluster_dist_m) {
          target = &cl;
          break;
        }
      }
      if (!target) {
        clusters.push_back({r.polygon, r.normal * static_cast<double>(r.support_count),
                            r.support_count});
        continue;
      }
      const std::array<Vec3, 4> aligned = align_cyclic(target->corners, r.polygon);
      const double w_old = static_cast<double>(target->weight);
      const double w_new = static_cast<double>(r.support_count);
      for (int i = 0; i < 4; ++i)
        target->corners[i] = (target->corners[i] * w_old + aligned[i] * w_new) / (w_old + w_new);
      target->normal_sum += r.normal * w_new;
      target->weight += r.support_count;
    }
    for (const auto& cl : clusters) {
      ROI3D out;
      out.roi_label = label;
      out.polygon = cl.corners;
      Vec3 n = cl.normal_sum;
      if (n.norm() < 1e-12) n = Vec3::UnitZ();
      out.normal = n.normalized();
      out.support_count = cl.weight;
      merged.push_back(std::move(out));
    }
  }
  return merged;
}

}  // namespace gaze3d
