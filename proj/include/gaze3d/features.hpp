#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gaze3d/geometry.hpp"

namespace gaze3d {

using Descriptor = Eigen::VectorXd;

struct Keypoint {
  Vec2 pixel;
  Descriptor descriptor;
  std::int64_t landmark_id = -1;  // ground-truth id, simulation only
};

struct Match {
  int query_index = -1;
  int train_index = -1;
  double distance = 0.0;
  double ratio = 0.0;
};

/// Frame payload as stored in feature files: parallel keypoint arrays plus
/// optional ground-truth landmark ids.
struct FeatureFrame {
  int frame_index = 0;
  std::vector<Vec2> pixels;
  std::vector<Descriptor> descriptors;
  std::vector<std::int64_t> landmark_ids;  // empty when absent
};

/// Validates dimensions and converts a feature frame into keypoints.
/// Throws DimensionMismatch when a descriptor length differs from expected_dim.
std::vector<Keypoint> extract_features(const FeatureFrame& frame, int expected_dim);

/// Nearest-neighbour matching with Lowe's ratio test. One match per query
/// index at most; a zero second-best distance is rejected as ambiguous.
std::vector<Match> match_descriptors(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& train,
                                     double ratio_threshold);

/// Hierarchical k-means vocabulary with an inverted file and TF-IDF scoring.
///
/// Quantization descends greedily to the nearest child centroid; image
/// signatures are L1-normalized IDF-weighted word counts and queries are
/// ranked by L1 distance (lower is better, ties by lowest image id).
class VocabularyTree {
 public:
  VocabularyTree() = default;

  /// Throws TooFewDescriptors when descriptors.size() < k.
  static VocabularyTree build(const std::vector<Descriptor>& descriptors, int k, int levels,
                              std::uint64_t seed);

  bool trained() const { return !nodes_.empty(); }
  int dimension() const { return dim_; }
  int word_count() const { return words_; }
  int image_count() const { return static_cast<int>(images_.size()); }

  /// Visual word (leaf id) for a descriptor; ties break to the lowest child index.
  int quantize(const Descriptor& d) const;

  void add_image(std::int64_t image_id, const std::vector<Descriptor>& descriptors);

  /// Top-n database images by ascending L1 signature distance.
  std::vector<std::pair<std::int64_t, double>> query_image(
      const std::vector<Descriptor>& descriptors, int top_n) const;

  /// Number of database images whose signature contains the word; exposed so
  /// tests can recompute IDF weights independently.
  int images_containing(int word) const;

  /// Word histogram of one image as stored in the database.
  std::map<int, int> image_words(std::int64_t image_id) const;

  // read-only structure access (test oracles re-walk the tree independently)
  int root() const { return 0; }
  int child_count(int node) const { return nodes_[node].child_count; }
  int child(int node, int i) const { return nodes_[node].first_child + i; }
  int leaf_id(int node) const { return nodes_[node].leaf_id; }
  const Descriptor& centroid(int node) const { return nodes_[node].centroid; }
  std::vector<std::int64_t> image_ids() const { return image_order_; }

 private:
  struct Node {
    Descriptor centroid;
    int first_child = -1;
    int child_count = 0;
    int leaf_id = -1;
  };

  std::map<int, double> normalized_signature(const std::map<int, int>& counts) const;
  void refresh_idf() const;

  std::vector<Node> nodes_;
  int k_ = 0;
  int levels_ = 0;
  int dim_ = 0;
  int words_ = 0;

  // image database, insertion kept sorted by image id
  std::vector<std::int64_t> image_order_;
  std::map<std::int64_t, std::map<int, int>> images_;  // id -> word counts
  mutable std::vector<double> idf_;                    // per word, lazily rebuilt
  mutable bool idf_valid_ = false;
};

}  // namespace gaze3d
