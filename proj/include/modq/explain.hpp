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

// Path decomposition of forest predictions and aggregate error analysis.
//
// For one tree, the prediction equals the featured frequency at the root plus
// the change in frequency along every edge of the decision path; each change
// is credited to the feature split on at the edge's parent. Averaging over
// trees gives bias + sum(contributions) == predict_proba for the forest.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "modq/corpus.hpp"
#include "modq/forest.hpp"
#include "modq/rank_eval.hpp"

namespace modq {

struct ContributionBreakdown {
  std::string comment_id;
  double bias = 0.0;
  std::vector<double> contributions;  // one per schema feature
  double predicted = 0.0;

  /// Non-zero contributions ordered by magnitude, ties by feature index.
  std::vector<std::pair<std::size_t, double>> ranked() const {
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t f = 0; f < contributions.size(); ++f) {
      if (contributions[f] != 0.0) out.emplace_back(f, contributions[f]);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return std::abs(a.second) > std::abs(b.second);
    });
    return out;
  }
};

/// Adds one tree's path contributions into `contributions` and returns the
/// root frequency (the tree's bias).
inline double accumulate_tree_path(const DecisionTree& tree, std::span<const double> x,
                                   std::span<double> contributions) {
  const auto& nodes = tree.nodes();
  std::size_t n = 0;
  while (!nodes[n].is_leaf()) {
    const auto& node = nodes[n];
    const auto f = static_cast<std::size_t>(node.feature);
    const auto next = static_cast<std::size_t>(x[f] <= node.threshold ? node.left : node.right);
    contributions[f] += nodes[next].featured_frequency - node.featured_frequency;
    n = next;
  }
  return nodes[0].featured_frequency;
}

inline ContributionBreakdown decompose_prediction(const Forest& forest, std::span<const double> x) {
  forest.check_input(x);
  ContributionBreakdown out;
  out.contributions.assign(x.size(), 0.0);
  double bias = 0.0;
  for (const auto& tree : forest.trees) bias += accumulate_tree_path(tree, x, out.contributions);
  const auto trees = static_cast<double>(forest.trees.size());
  out.bias = bias / trees;
  for (auto& c : out.contributions) c /= trees;
  out.predicted = forest.predict_proba(x);
  return out;
}

inline ContributionBreakdown decompose_comment(const ForestScorer& scorer, std::size_t comment) {
  auto out = decompose_prediction(scorer.model().forest, scorer.featurizer().row(comment));
  out.comment_id = scorer.featurizer().corpus().comment(comment).comment_id;
  return out;
}

// ---------------------------------------------------------------------------
// Error analysis

enum Outcome : std::size_t { kTruePositive, kFalsePositive, kTrueNegative, kFalseNegative };

inline constexpr std::array<const char*, 4> kOutcomeNames = {"true_positive", "false_positive",
                                                                  "true_negative", "false_negative"};

struct ErrorReport {
  std::string variant;
  std::vector<std::string> feature_names;
  std::array<std::size_t, 4> counts{};
  std::array<std::vector<double>, 4> mean_values;
  std::array<std::vector<double>, 4> mean_contributions;
  std::vector<double> mean_abs_contribution;  // over all analyzed rows
  std::vector<std::size_t> top_features;

  nlohmann::json to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (auto f : top_features) {
      nlohmann::json values, contribs;
      for (std::size_t o = 0; o < 4; ++o) {
        values[kOutcomeNames[o]] = mean_values[o][f];
        contribs[kOutcomeNames[o]] = mean_contributions[o][f];
      }
      features.push_back({{"feature", feature_names[f]},
                          {"mean_abs_contribution", mean_abs_contribution[f]},
                          {"mean_value", std::move(values)},
                          {"mean_contribution", std::move(contribs)}});
    }
    nlohmann::json count_json;
    for (std::size_t o = 0; o < 4; ++o) count_json[kOutcomeNames[o]] = counts[o];
    return {{"variant", variant}, {"counts", std::move(count_json)}, {"top_features", std::move(features)}};
  }

  std::string to_text() const {
    std::ostringstream out;
    char buf[160];
    out << "Error analysis (" << variant << "): TP=" << counts[kTruePositive]
        << " FP=" << counts[kFalsePositive] << " TN=" << counts[kTrueNegative]
        << " FN=" << counts[kFalseNegative] << '\n';
    std::snprintf(buf, sizeof buf, "%-24s %10s %10s %10s %10s   %s\n", "Feature (mean value)", "True pos.",
                  "False pos.", "True neg.", "False neg.", "mean |c|");
    out << buf;
    for (auto f : top_features) {
      std::snprintf(buf, sizeof buf, "%-24.24s %10.3f %10.3f %10.3f %10.3f   %.4f\n",
                    feature_names[f].c_str(), mean_values[0][f], mean_values[1][f], mean_values[2][f],
                    mean_values[3][f], mean_abs_contribution[f]);
      out << buf;
    }
    out << "Mean contribution c\n";
    for (auto f : top_features) {
      std::snprintf(buf, sizeof buf, "%-24.24s %+10.4f %+10.4f %+10.4f %+10.4f\n", feature_names[f].c_str(),
                    mean_contributions[0][f], mean_contributions[1][f], mean_contributions[2][f],
                    mean_contributions[3][f]);
      out << buf;
    }
    return out.str();
  }
};

/// Two outcome definitions are reported side by side:
///  - rank: predicted featured = in the article's top k AND probability > threshold;
///  - threshold: predicted featured = probability > threshold.
/// In both, FN are featured comments not predicted featured.
struct ErrorAnalysis {
  ErrorReport rank_based;
  ErrorReport threshold_based;
};

namespace explain_detail {

struct Accumulator {
  std::array<std::size_t, 4> counts{};
  std::array<std::vector<double>, 4> values, contribs;
  std::vector<double> abs_contrib;

  explicit Accumulator(std::size_t p) : abs_contrib(p, 0.0) {
    for (std::size_t o = 0; o < 4; ++o) {
      values[o].assign(p, 0.0);
      contribs[o].assign(p, 0.0);
    }
  }

  void add(Outcome o, std::span<const double> x, const ContributionBreakdown& b) {
    ++counts[o];
    for (std::size_t f = 0; f < x.size(); ++f) {
      values[o][f] += x[f];
      contribs[o][f] += b.contributions[f];
      abs_contrib[f] += std::abs(b.contributions[f]);
    }
  }

  ErrorReport finish(std::string variant, const FeatureSchema& schema, std::size_t top_n) {
    ErrorReport r;
    r.variant = std::move(variant);
    r.feature_names = schema.names;
    r.counts = counts;
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    for (std::size_t o = 0; o < 4; ++o) {
      const double n = counts[o] > 0 ? static_cast<double>(counts[o]) : 1.0;
      for (auto& v : values[o]) v /= n;
      for (auto& c : contribs[o]) c /= n;
    }
    r.mean_values = std::move(values);
    r.mean_contributions = std::move(contribs);
    for (auto& a : abs_contrib) a /= total > 0 ? static_cast<double>(total) : 1.0;
    r.mean_abs_contribution = std::move(abs_contrib);
    std::vector<std::size_t> order(r.feature_names.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return r.mean_abs_contribution[a] > r.mean_abs_contribution[b];
    });
    order.resize(std::min(top_n, order.size()));
    r.top_features = std::move(order);
    return r;
  }
};

inline Outcome classify(bool actual, bool predicted) {
  if (predicted) return actual ? kTruePositive : kFalsePositive;
  return actual ? kFalseNegative : kTrueNegative;
}

}  // namespace explain_detail

inline ErrorAnalysis error_analysis(const ForestScorer& scorer, std::span<const std::string> articles,
                                    std::size_t k = 5, double threshold = kProbabilityThreshold,
                                    std::size_t top_n = 10) {
  if (k == 0) throw Error("error analysis: k must be positive");
  const auto& corpus = scorer.featurizer().corpus();
  const auto& forest = scorer.model().forest;
  const std::size_t p = forest.schema.size();
  explain_detail::Accumulator by_rank(p), by_threshold(p);
  std::vector<double> x(p);
  for (const auto& article_id : articles) {
    struct Row {
      std::size_t comment;
      std::vector<double> x;
      ContributionBreakdown breakdown;
    };
    std::vector<Row> rows;
    std::vector<RankedEntry> ranked;
    for (auto i : candidate_comments(corpus, article_id)) {
      scorer.featurizer().fill(i, x);
      auto b = decompose_prediction(forest, x);
      ranked.push_back({corpus.comment(i).comment_id, i, b.predicted});
      rows.push_back({i, x, std::move(b)});
    }
    sort_ranked(ranked);
    std::unordered_set<std::size_t> top;
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) top.insert(ranked[r].comment);
    for (const auto& row : rows) {
      const bool actual = corpus.comment(row.comment).featured();
      const bool above = row.breakdown.predicted > threshold;
      by_rank.add(explain_detail::classify(actual, above && top.contains(row.comment)), row.x,
                  row.breakdown);
      by_threshold.add(explain_detail::classify(actual, above), row.x, row.breakdown);
    }
  }
  return {by_rank.finish("rank", forest.schema, top_n),
          by_threshold.finish("threshold", forest.schema, top_n)};
}

}  // namespace modq
