/*
 * Copyright 2026 The modq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#pragma once

// Random forest classifier for the binary featured / not-featured task.
//
// Trees are grown greedily with weighted Gini impurity over a per-node random
// subset of features. Candidate thresholds are midpoints between consecutive
// distinct values of the rows reaching a node. Each node keeps the featured
// frequency of its (bootstrap weighted) training rows, which makes both the
// probability estimate and the path decomposition in explain.hpp available
// from the same arrays.
//
// Every tree draws from its own random stream derived from (seed, tree index),
// so a forest is identical no matter how many workers trained it.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "modq/common.hpp"
#include "modq/features.hpp"

namespace modq {

struct MaxFeatures {
  enum class Kind { kSqrt, kAll, kFixed };
  Kind kind = Kind::kSqrt;
  std::size_t k = 0;

  static MaxFeatures sqrt() { return {Kind::kSqrt, 0}; }
  static MaxFeatures all() { return {Kind::kAll, 0}; }
  static MaxFeatures fixed(std::size_t k) { return {Kind::kFixed, k}; }

  std::size_t resolve(std::size_t n_features) const {
    switch (kind) {
      case Kind::kSqrt:
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))));
      case Kind::kAll:
        return n_features;
      case Kind::kFixed:
        return std::clamp<std::size_t>(k, 1, n_features);
    }
    return n_features;
  }

  friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

struct Hyperparams {
  std::size_t n_estimators = 100;
  std::optional<std::size_t> max_depth;  // nullopt: grow until pure or too small
  std::size_t min_samples_split = 2;
  MaxFeatures max_features = MaxFeatures::sqrt();
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_estimators == 0) throw Error("n_estimators must be positive");
    if (max_depth && *max_depth == 0) throw Error("max_depth must be positive");
    if (min_samples_split < 2) throw Error("min_samples_split must be at least 2");
    if (max_features.kind == MaxFeatures::Kind::kFixed && max_features.k == 0) {
      throw Error("fixed max_features must be positive");
    }
  }

  /// Non-textual features only: 200 trees, depth 50, min split 10.
  static Hyperparams rf(std::uint64_t seed = 0) { return {200, 50, 10, MaxFeatures::sqrt(), true, seed}; }
  /// Non-textual plus embeddings: 1200 trees, depth 64, min split 2.
  static Hyperparams rf_emb(std::uint64_t seed = 0) {
    return {1200, 64, 2, MaxFeatures::sqrt(), true, seed};
  }
  /// Non-textual plus bag of words: 1200 trees, depth 110, min split 10.
  static Hyperparams rf_bow(std::uint64_t seed = 0) {
    return {1200, 110, 10, MaxFeatures::sqrt(), true, seed};
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double featured_frequency = 0.0;
  double weight = 0.0;  // bootstrap-weighted training rows reaching the node

  bool is_leaf() const { return feature < 0; }
  std::array<double, 2> class_frequencies() const {
    return {1.0 - featured_frequency, featured_frequency};
  }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) { validate(); }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t n = 0;
    while (!nodes_[n].is_leaf()) {
      const auto& node = nodes_[n];
      n = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                       ? node.left
                                       : node.right);
    }
    return n;
  }

  double predict(std::span<const double> x) const { return nodes_[leaf_index(x)].featured_frequency; }

  std::size_t depth() const {
    std::vector<std::size_t> d(nodes_.size(), 0);
    std::size_t deepest = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      deepest = std::max(deepest, d[i]);
      if (!nodes_[i].is_leaf()) {
        d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
      }
    }
    return deepest;
  }

  /// Structural checks: children follow their parent, frequencies in [0, 1].
  void validate() const {
    if (nodes_.empty()) throw Error("tree has no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (!(n.featured_frequency >= 0.0 && n.featured_frequency <= 1.0)) {
        throw Error("tree node frequency outside [0, 1]");
      }
      if (n.is_leaf()) continue;
      const auto size = static_cast<std::int32_t>(nodes_.size());
      if (n.left <= static_cast<std::int32_t>(i) || n.right <= static_cast<std::int32_t>(i) ||
          n.left >= size || n.right >= size) {
        throw Error("tree node has invalid children");
      }
    }
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct TrainingManifest {
  std::size_t rows = 0;
  std::size_t featured = 0;
  std::string data_digest;

  friend bool operator==(const TrainingManifest&, const TrainingManifest&) = default;
};

struct Forest {
  std::vector<DecisionTree> trees;
  Hyperparams hyperparams;
  FeatureSchema schema;
  TrainingManifest manifest;

  void check_input(std::span<const double> x) const {
    if (x.size() != schema.size()) {
      throw SchemaMismatchError("input has " + std::to_string(x.size()) +
                                " features, forest expects " + std::to_string(schema.size()));
    }
  }

  /// Mean over trees of the featured frequency of the reached leaf.
  double predict_proba(std::span<const double> x) const {
    check_input(x);
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
  }

  std::array<double, 2> class_probabilities(std::span<const double> x) const {
    const double p = predict_proba(x);
    return {1.0 - p, p};
  }

  friend bool operator==(const Forest&, const Forest&) = default;
};

namespace forest_detail {

/// Column-major copy of the training matrix. Columns holding only integers in
/// [0, 255] also get a byte code so split search can use a histogram.
struct Columns {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> labels;
  std::vector<bool> small_int;
  std::vector<std::uint8_t> codes;

  double value(std::size_t f, std::size_t r) const { return values[f * rows + r]; }

  explicit Columns(const DesignMatrix& m)
      : rows(m.rows), cols(m.cols()), values(m.rows * m.cols()), labels(m.labels),
        small_int(m.cols(), true), codes(m.rows * m.cols(), 0) {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = m.row(r);
      for (std::size_t f = 0; f < cols; ++f) {
        const double v = row[f];
        if (!std::isfinite(v)) {
          throw Error("non-finite feature value in row " + std::to_string(r) + ", column " +
                      m.schema.names[f]);
        }
        values[f * rows + r] = v;
        if (small_int[f]) {
          if (v >= 0.0 && v <= 255.0 && v == std::floor(v)) {
            codes[f * rows + r] = static_cast<std::uint8_t>(v);
          } else {
            small_int[f] = false;
          }
        }
      }
    }
  }
};

struct Split {
  double impurity = std::numeric_limits<double>::infinity();
  std::int32_t feature = -1;
  double threshold = 0.0;

  bool worse_than(double imp, std::int32_t f, double thr) const {
    if (imp != impurity) return imp < impurity;
    if (f != feature) return f < feature;
    return thr < threshold;
  }
};

/// Weighted Gini impurity times weight for a child holding (neg, pos).
inline double child_impurity(std::int64_t neg, std::int64_t pos) {
  const auto a = static_cast<double>(neg);
  const auto b = static_cast<double>(pos);
  return 2.0 * a * b / (a + b);
}

inline double midpoint(double lo, double hi) {
  double mid = lo / 2.0 + hi / 2.0;
  if (mid >= hi || !std::isfinite(mid)) mid = lo;
  return mid;
}

class TreeGrower {
 public:
  TreeGrower(const Columns& data, const Hyperparams& hp, std::uint64_t tree_seed)
      : data_(data), hp_(hp), rng_(tree_seed), mtry_(hp.max_features.resolve(data.cols)) {}

  DecisionTree grow() {
    weights_.assign(data_.rows, 0);
    if (hp_.bootstrap) {
      for (std::size_t i = 0; i < data_.rows; ++i) ++weights_[rng_.below(data_.rows)];
    } else {
      std::fill(weights_.begin(), weights_.end(), 1u);
    }
    rows_.clear();
    for (std::size_t r = 0; r < data_.rows; ++r) {
      if (weights_[r] > 0) rows_.push_back(static_cast<std::uint32_t>(r));
    }
    features_.resize(data_.cols);

    struct Pending {
      std::size_t node, begin, end, depth;
    };
    std::vector<TreeNode> nodes(1);
    std::vector<Pending> stack{{0, 0, rows_.size(), 0}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      std::int64_t neg = 0, pos = 0;
      for (std::size_t i = p.begin; i < p.end; ++i) {
        (data_.labels[rows_[i]] ? pos : neg) += weights_[rows_[i]];
      }
      nodes[p.node].weight = static_cast<double>(neg + pos);
      nodes[p.node].featured_frequency = static_cast<double>(pos) / static_cast<double>(neg + pos);

      const bool stop = (hp_.max_depth && p.depth >= *hp_.max_depth) ||
                        (p.end - p.begin) < hp_.min_samples_split || neg == 0 || pos == 0;
      if (stop) continue;
      const Split split = find_split(p.begin, p.end, neg, pos);
      if (split.feature < 0) continue;

      const auto f = static_cast<std::size_t>(split.feature);
      auto middle = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                   rows_.begin() + static_cast<std::ptrdiff_t>(p.end),
                                   [&](std::uint32_t r) { return data_.value(f, r) <= split.threshold; });
      const auto mid = static_cast<std::size_t>(middle - rows_.begin());
      const auto left = nodes.size();
      nodes.emplace_back();
      nodes.emplace_back();
      auto& node = nodes[p.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = static_cast<std::int32_t>(left);
      node.right = static_cast<std::int32_t>(left + 1);
      stack.push_back({left + 1, mid, p.end, p.depth + 1});
      stack.push_back({left, p.begin, mid, p.depth + 1});
    }
    return DecisionTree(std::move(nodes));
  }

 private:
  // Draws features without replacement until mtry non-constant ones have been
  // examined or none are left.
  Split find_split(std::size_t begin, std::size_t end, std::int64_t neg, std::int64_t pos) {
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    Split best;
    std::size_t examined = 0;
    for (std::size_t i = 0; i < features_.size() && examined < mtry_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.below(features_.size() - i));
      std::swap(features_[i], features_[j]);
      const std::size_t f = features_[i];
      const bool varied = data_.small_int[f] ? scan_histogram(f, begin, end, neg, pos, best)
                                             : scan_sorted(f, begin, end, neg, pos, best);
      if (varied) ++examined;
    }
    return best;
  }

  void consider(std::int64_t left_neg, std::int64_t left_pos, std::int64_t neg, std::int64_t pos,
                std::size_t f, double lo, double hi, Split& best) const {
    const double imp =
        child_impurity(left_neg, left_pos) + child_impurity(neg - left_neg, pos - left_pos);
    const double thr = midpoint(lo, hi);
    if (best.worse_than(imp, static_cast<std::int32_t>(f), thr)) {
      best = {imp, static_cast<std::int32_t>(f), thr};
    }
  }

  bool scan_histogram(std::size_t f, std::size_t begin, std::size_t end, std::int64_t neg,
                      std::int64_t pos, Split& best) {
    const std::uint8_t* codes = data_.codes.data() + f * data_.rows;
    int lo = 255, hi = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows_[i];
      const int c = codes[r];
      hist_[data_.labels[r]][c] += weights_[r];
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    if (lo == hi) {
      hist_[0][lo] = hist_[1][lo] = 0;
      return false;
    }
    std::int64_t left_neg = 0, left_pos = 0;
    int prev = -1;
    for (int v = lo; v <= hi; ++v) {
      if (hist_[0][v] == 0 && hist_[1][v] == 0) continue;
      if (prev >= 0) consider(left_neg, left_pos, neg, pos, f, prev, v, best);
      left_neg += hist_[0][v];
      left_pos += hist_[1][v];
      hist_[0][v] = hist_[1][v] = 0;
      prev = v;
    }
    return true;
  }

  bool scan_sorted(std::size_t f, std::size_t begin, std::size_t end, std::int64_t neg,
                   std::int64_t pos, Split& best) {
    pairs_.clear();
    for (std::size_t i = begin; i < end; ++i) pairs_.emplace_back(data_.value(f, rows_[i]), rows_[i]);
    std::sort(pairs_.begin(), pairs_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (pairs_.front().first == pairs_.back().first) return false;
    std::int64_t left_neg = 0, left_pos = 0;
    for (std::size_t i = 0; i + 1 < pairs_.size(); ++i) {
      const auto r = pairs_[i].second;
      (data_.labels[r] ? left_pos : left_neg) += weights_[r];
      if (pairs_[i].first != pairs_[i + 1].first) {
        consider(left_neg, left_pos, neg, pos, f, pairs_[i].first, pairs_[i + 1].first, best);
      }
    }
    return true;
  }

  const Columns& data_;
  const Hyperparams& hp_;
  Rng rng_;
  std::size_t mtry_;
  std::vector<std::uint32_t> weights_;
  std::vector<std::uint32_t> rows_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, std::uint32_t>> pairs_;
  std::array<std::array<std::int64_t, 256>, 2> hist_{};
};

}  // namespace forest_detail

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first
/// exception.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline Forest train_forest(const DesignMatrix& matrix, const Hyperparams& hp, std::size_t workers = 1) {
  hp.validate();
  matrix.validate();
  if (matrix.rows == 0 || matrix.cols() == 0) throw Error("cannot train on an empty matrix");
  const std::size_t featured = matrix.featured_count();
  if (featured == 0 || featured == matrix.rows) {
    throw Error("training data must contain both featured and non-featured rows");
  }
  const forest_detail::Columns columns(matrix);

  Forest forest;
  forest.hyperparams = hp;
  forest.schema = matrix.schema;
  forest.manifest = {matrix.rows, featured, matrix.digest()};
  forest.trees.resize(hp.n_estimators);
  parallel_for(hp.n_estimators, workers, [&](std::size_t t) {
    forest.trees[t] = forest_detail::TreeGrower(columns, hp, derive_seed(hp.seed, t)).grow();
  });
  return forest;
}

// ---------------------------------------------------------------------------
// Informed baseline

/// A user whose historical featured ratio exceeds this counts as featured.
inline constexpr double kBaselineThreshold = 0.03;

/// The commenting user's featured ratio over their earlier posts.
inline double baseline_score(std::size_t comment, const CorpusStore& corpus) {
  const auto& c = corpus.comment(comment);
  return user_history_at(c.user_key, c.created_at, corpus).ratio_featured;
}

inline bool baseline_classify(double score, double threshold = kBaselineThreshold) {
  return score > threshold;
}

}  // namespace modq
