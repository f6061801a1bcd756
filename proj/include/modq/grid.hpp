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

// Small exhaustive hyperparameter search. Each combination is trained on the
// training rows and scored on held-out rows, grouped by article.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/features.hpp"
#include "modq/forest.hpp"
#include "modq/model.hpp"
#include "modq/rank_eval.hpp"

namespace modq {

/// Values to try per hyperparameter. An empty list keeps the base value.
struct GridSpec {
  std::vector<std::size_t> n_estimators;
  std::vector<std::optional<std::size_t>> max_depth;  // nullopt = unlimited
  std::vector<std::size_t> min_samples_split;
  std::vector<MaxFeatures> max_features;

  /// Cartesian product, n_estimators varying slowest.
  std::vector<Hyperparams> expand(const Hyperparams& base) const {
    auto or_base = [](const auto& values, const auto& fallback) {
      using T = std::decay_t<decltype(fallback)>;
      return values.empty() ? std::vector<T>{fallback} : std::vector<T>(values.begin(), values.end());
    };
    std::vector<Hyperparams> out;
    for (auto n : or_base(n_estimators, base.n_estimators)) {
      for (const auto& d : or_base(max_depth, base.max_depth)) {
        for (auto s : or_base(min_samples_split, base.min_samples_split)) {
          for (const auto& f : or_base(max_features, base.max_features)) {
            Hyperparams hp = base;
            hp.n_estimators = n;
            hp.max_depth = d;
            hp.min_samples_split = s;
            hp.max_features = f;
            hp.validate();
            out.push_back(hp);
          }
        }
      }
    }
    return out;
  }
};

struct GridResult {
  Hyperparams hyperparams;
  std::optional<double> mean_ndcg;  // over held-out articles with a featured row
  std::size_t articles = 0;
  ClassificationMetrics classification;

  nlohmann::json to_json() const {
    return {{"hyperparams", hyperparams_to_json(hyperparams)},
            {"mean_ndcg", mean_ndcg ? nlohmann::json(*mean_ndcg) : nlohmann::json(nullptr)},
            {"articles", articles},
            {"f1", classification.f1},
            {"precision", classification.precision},
            {"recall", classification.recall}};
  }
};

/// NDCG@k of `probs` over `rows`, each article's rows ranked separately.
/// Returns the mean over articles holding a featured row and their count.
inline std::pair<std::optional<double>, std::size_t> grouped_ndcg(const CorpusStore& corpus,
                                                                  std::span<const std::size_t> rows,
                                                                  std::span<const double> probs,
                                                                  std::size_t k) {
  std::map<std::string_view, std::vector<RankedEntry>> by_article;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& c = corpus.comment(rows[r]);
    by_article[c.article_id].push_back({c.comment_id, rows[r], probs[r]});
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (auto& [article, entries] : by_article) {
    sort_ranked(entries);
    std::vector<std::uint8_t> rel;
    std::size_t total = 0;
    for (const auto& e : entries) {
      rel.push_back(corpus.comment(e.comment).featured() ? 1 : 0);
      total += rel.back();
    }
    if (auto v = ndcg_from_relevance(rel, total, k)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return {std::nullopt, 0};
  return {sum / static_cast<double>(n), n};
}

/// Results best first by mean NDCG@k; combinations without a score go last.
/// Ties keep grid order.
inline std::vector<GridResult> grid_search(const CorpusStore& corpus, const FeatureSpec& spec,
                                           std::span<const std::size_t> train_rows,
                                           std::span<const std::size_t> heldout_rows, const GridSpec& grid,
                                           const Hyperparams& base, std::size_t k = 5, std::size_t workers = 1,
                                           const EmbeddingTable* embeddings = nullptr) {
  if (k == 0) throw Error("grid: k must be positive");
  if (heldout_rows.empty()) throw Error("grid: no held-out rows");
  const Featurizer featurizer(corpus, spec, embeddings);
  const auto train = assemble_matrix(train_rows, featurizer);
  const auto heldout = assemble_matrix(heldout_rows, featurizer);
  std::vector<GridResult> results;
  for (const auto& hp : grid.expand(base)) {
    const auto forest = train_forest(train, hp, workers);
    std::vector<double> probs(heldout.rows);
    for (std::size_t r = 0; r < heldout.rows; ++r) probs[r] = forest.predict_proba(heldout.row(r));
    GridResult res;
    res.hyperparams = hp;
    std::tie(res.mean_ndcg, res.articles) = grouped_ndcg(corpus, heldout_rows, probs, k);
    res.classification = classification_metrics(std::span<const double>(probs),
                                                std::span<const std::uint8_t>(heldout.labels));
    results.push_back(std::move(res));
  }
  std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    if (a.mean_ndcg.has_value() != b.mean_ndcg.has_value()) return a.mean_ndcg.has_value();
    return a.mean_ndcg && *a.mean_ndcg > *b.mean_ndcg;
  });
  return results;
}

}  // namespace modq
