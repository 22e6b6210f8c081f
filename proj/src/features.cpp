#include "gaze3d/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gaze3d/rng.hpp"

namespace gaze3d {

std::vector<Keypoint> extract_features(const FeatureFrame& frame, int expected_dim) {
  std::vector<Keypoint> out;
  out.reserve(frame.pixels.size());
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    if (frame.descriptors[i].size() != expected_dim)
      fail(Errc::dimension_mismatch,
           "descriptor " + std::to_string(i) + " has length " +
               std::to_string(frame.descriptors[i].size()) + ", expected " +
               std::to_string(expected_dim));
    Keypoint kp;
    kp.pixel = frame.pixels[i];
    kp.descriptor = frame.descriptors[i];
    if (i < frame.landmark_ids.size()) kp.landmark_id = frame.landmark_ids[i];
    out.push_back(std::move(kp));
  }
  return out;
}

std::vector<Match> match_descriptors(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& train,
                                     double ratio_threshold) {
  if (train.empty()) fail(Errc::empty_train_set, "cannot match against an empty train set");
  std::vector<Match> out;
  for (int q = 0; q < static_cast<int>(query.size()); ++q) {
    int best = -1;
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    for (int t = 0; t < static_cast<int>(train.size()); ++t) {
      const double d = (query[q] - train[t]).norm();
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = t;
      } else if (d < d2) {
        d2 = d;
      }
    }
    double ratio = 0.0;
    if (std::isfinite(d2)) {
      if (d2 <= 0.0) continue;  // duplicate train descriptors: ambiguous
      ratio = d1 / d2;
      if (ratio >= ratio_threshold) continue;
    }
    out.push_back({q, best, d1, ratio});
  }
  return out;
}

namespace {

/// Lloyd's k-means with seeded k-means++ initialization. Empty clusters are
/// re-seeded to the point farthest from its assigned centroid.
std::vector<int> kmeans_assign(const std::vector<Descriptor>& points,
                               const std::vector<int>& subset, int k, std::uint64_t seed,
                               std::vector<Descriptor>& centroids) {
  const int n = static_cast<int>(subset.size());
  Rng rng(seed);

  // k-means++ seeding
  centroids.clear();
  centroids.push_back(points[subset[rng.uniform_index(n)]]);
  std::vector<double> d2(n, 0.0);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids)
        best = std::min(best, (points[subset[i]] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.uniform_index(n));
    } else {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[subset[pick]]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best_j = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (points[subset[i]] - centroids[j]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best_j = j;
        }
      }
      if (assign[i] != best_j) {
        assign[i] = best_j;
        changed = true;
      }
    }

    std::vector<int> sizes(k, 0);
    for (int i = 0; i < n; ++i) ++sizes[assign[i]];
    for (int j = 0; j < k; ++j) {
      if (sizes[j] > 0) continue;
      int worst = -1;
      double worst_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (sizes[assign[i]] <= 1) continue;
        const double d = (points[subset[i]] - centroids[assign[i]]).squaredNorm();
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      if (worst < 0) break;  // nothing left to move (duplicate-heavy input)
      --sizes[assign[worst]];
      assign[worst] = j;
      sizes[j] = 1;
      changed = true;
    }

    for (int j = 0; j < k; ++j) {
      if (sizes[j] == 0) continue;
      Descriptor mean = Descriptor::Zero(points[subset[0]].size());
      for (int i = 0; i < n; ++i)
        if (assign[i] == j) mean += points[subset[i]];
      centroids[j] = mean / sizes[j];
    }
    if (!changed) break;
  }
  return assign;
}

}  // namespace

VocabularyTree VocabularyTree::build(const std::vector<Descriptor>& descriptors, int k, int levels,
                                     std::uint64_t seed) {
  if (static_cast<int>(descriptors.size()) < k)
    fail(Errc::too_few_descriptors, "need at least k descriptors to train");
  VocabularyTree tree;
  tree.k_ = k;
  tree.levels_ = levels;
  tree.dim_ = static_cast<int>(descriptors[0].size());
  for (const auto& d : descriptors)
    if (d.size() != tree.dim_) fail(Errc::dimension_mismatch, "mixed descriptor dimensions");

  struct WorkItem {
    int node;
    std::vector<int> subset;
    int depth;
  };

  std::vector<int> all(descriptors.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  tree.nodes_.push_back({});
  std::vector<WorkItem> stack;
  stack.push_back({0, std::move(all), 0});
  int node_counter = 0;

  // Depth-first expansion; per-node RNG streams keep the result independent
  // of traversal details.
  while (!stack.empty()) {
    WorkItem item = std::move(stack.back());
    stack.pop_back();
    Node& node = tree.nodes_[item.node];

    Descriptor mean = Descriptor::Zero(tree.dim_);
    for (int i : item.subset) mean += descriptors[i];
    node.centroid = mean / static_cast<double>(item.subset.size());

    if (item.depth == tree.levels_ || static_cast<int>(item.subset.size()) < tree.k_) {
      node.leaf_id = tree.words_++;
      continue;
    }

    std::vector<Descriptor> centroids;
    const std::vector<int> assign =
        kmeans_assign(descriptors, item.subset, tree.k_, mix_seed(seed, ++node_counter), centroids);

    std::vector<std::vector<int>> groups(tree.k_);
    for (std::size_t i = 0; i < item.subset.size(); ++i)
      groups[assign[i]].push_back(item.subset[i]);

    const int first_child = static_cast<int>(tree.nodes_.size());
    int child_count = 0;
    for (int j = 0; j < tree.k_; ++j) {
      if (groups[j].empty()) continue;
      Node child;
      child.centroid = centroids[j];
      tree.nodes_.push_back(std::move(child));
      ++child_count;
    }
    tree.nodes_[item.node].first_child = first_child;
    tree.nodes_[item.node].child_count = child_count;

    // Push in reverse so children are processed (and leaf ids assigned) in
    // ascending child order.
    int child = first_child + child_count - 1;
    for (int j = tree.k_ - 1; j >= 0; --j) {
      if (groups[j].empty()) continue;
      stack.push_back({child, std::move(groups[j]), item.depth + 1});
      --child;
    }
  }
  return tree;
}

int VocabularyTree::quantize(const Descriptor& d) const {
  if (!trained()) fail(Errc::untrained_tree, "quantize on an untrained tree");
  if (d.size() != dim_) fail(Errc::dimension_mismatch, "descriptor dimension mismatch");
  int node = 0;
  while (nodes_[node].leaf_id < 0) {
    const Node& cur = nodes_[node];
    int best = cur.first_child;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < cur.child_count; ++c) {
      const double dist = (d - nodes_[cur.first_child + c].centroid).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = cur.first_child + c;
      }
    }
    node = best;
  }
  return nodes_[node].leaf_id;
}

void VocabularyTree::add_image(std::int64_t image_id, const std::vector<Descriptor>& descriptors) {
  if (!trained()) fail(Errc::untrained_tree, "add_image on an untrained tree");
  if (images_.count(image_id)) fail(Errc::invalid_spec, "duplicate image id");
  std::map<int, int> counts;
  for (const auto& d : descriptors) ++counts[quantize(d)];
  images_.emplace(image_id, std::move(counts));
  image_order_.insert(std::upper_bound(image_order_.begin(), image_order_.end(), image_id),
                      image_id);
  idf_valid_ = false;
}

void VocabularyTree::refresh_idf() const {
  idf_.assign(words_, 0.0);
  std::vector<int> containing(words_, 0);
  for (const auto& [id, counts] : images_)
    for (const auto& [word, c] : counts)
      if (c > 0) ++containing[word];
  const double n_images = static_cast<double>(images_.size());
  for (int w = 0; w < words_; ++w)
    if (containing[w] > 0) idf_[w] = std::log(n_images / containing[w]);
  idf_valid_ = true;
}

int VocabularyTree::images_containing(int word) const {
  int count = 0;
  for (const auto& [id, counts] : images_) {
    auto it = counts.find(word);
    if (it != counts.end() && it->second > 0) ++count;
  }
  return count;
}

std::map<int, int> VocabularyTree::image_words(std::int64_t image_id) const {
  auto it = images_.find(image_id);
  if (it == images_.end()) fail(Errc::invalid_spec, "unknown image id");
  return it->second;
}

std::map<int, double> VocabularyTree::normalized_signature(const std::map<int, int>& counts) const {
  std::map<int, double> sig;
  double norm = 0.0;
  for (const auto& [word, c] : counts) {
    const double w = idf_[word] * c;
    if (w > 0.0) {
      sig[word] = w;
      norm += w;
    }
  }
  if (norm > 0.0)
    for (auto& [word, w] : sig) w /= norm;
  return sig;
}

std::vector<std::pair<std::int64_t, double>> VocabularyTree::query_image(
    const std::vector<Descriptor>& descriptors, int top_n) const {
  if (!trained()) fail(Errc::untrained_tree, "query on an untrained tree");
  if (images_.empty()) fail(Errc::empty_database, "query against an empty database");
  if (!idf_valid_) refresh_idf();

  std::map<int, int> qcounts;
  for (const auto& d : descriptors) ++qcounts[quantize(d)];
  const std::map<int, double> qsig = normalized_signature(qcounts);

  std::vector<std::pair<std::int64_t, double>> scores;
  scores.reserve(images_.size());
  for (std::int64_t id : image_order_) {
    const std::map<int, double> dsig = normalized_signature(images_.at(id));
    // L1 distance over the union of supports, accumulated in ascending word order.
    double dist = 0.0;
    auto qi = qsig.begin();
    auto di = dsig.begin();
    while (qi != qsig.end() || di != dsig.end()) {
      if (di == dsig.end() || (qi != qsig.end() && qi->first < di->first)) {
        dist += qi->second;
        ++qi;
      } else if (qi == qsig.end() || di->first < qi->first) {
        dist += di->second;
        ++di;
      } else {
        dist += std::abs(qi->second - di->second);
        ++qi;
        ++di;
      }
    }
    scores.emplace_back(id, dist);
  }
  std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  if (top_n >= 0 && static_cast<int>(scores.size()) > top_n) scores.resize(top_n);
  return scores;
}

}  // namespace gaze3d
