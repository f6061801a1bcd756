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

// Per-article ranking by featured-class probability and the evaluation
// metrics: precision/recall/F1, binary-relevance NDCG@k and nominal
// Krippendorff's alpha.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/features.hpp"
#include "modq/forest.hpp"
#include "modq/model.hpp"

namespace modq {

/// Anything that assigns a featured score to a comment of a corpus, and the
/// score above which the comment counts as predicted featured.
template <class S>
concept Scorer = requires(const S& s, std::size_t comment) {
  { s.score(comment) } -> std::convertible_to<double>;
  { s.threshold() } -> std::convertible_to<double>;
};

inline constexpr double kProbabilityThreshold = 0.5;

class ForestScorer {
 public:
  ForestScorer(const Model& model, const CorpusStore& corpus,
               const EmbeddingTable* embeddings = nullptr)
      : model_(&model), featurizer_(corpus, model.features, embeddings) {
    if (!(featurizer_.schema() == model.forest.schema)) {
      throw SchemaMismatchError("model schema does not match its featurizer");
    }
  }

  double score(std::size_t comment) const {
    return model_->forest.predict_proba(featurizer_.row(comment));
  }
  double threshold() const { return kProbabilityThreshold; }

  const Model& model() const { return *model_; }
  const Featurizer& featurizer() const { return featurizer_; }

 private:
  const Model* model_;
  Featurizer featurizer_;
};

/// Informed baseline: the user's historical featured ratio.
class BaselineScorer {
 public:
  explicit BaselineScorer(const CorpusStore& corpus) : corpus_(&corpus), history_(corpus) {}

  double score(std::size_t comment) const {
    const auto& c = corpus_->comment(comment);
    return history_.at(c.user_key, c.created_at).ratio_featured;
  }
  double threshold() const { return kBaselineThreshold; }

 private:
  const CorpusStore* corpus_;
  UserHistoryIndex history_;
};

/// Uniform pseudo-random scores, a fixed function of (seed, comment).
class RandomScorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  double score(std::size_t comment) const {
    return static_cast<double>(derive_seed(seed_, comment) >> 11) * 0x1.0p-53;
  }
  double threshold() const { return kProbabilityThreshold; }

 private:
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Ranking

struct RankedEntry {
  std::string comment_id;
  std::size_t comment = 0;  // corpus index
  double probability = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedRecommendation {
  std::string article_id;
  std::vector<RankedEntry> entries;
  std::size_t k = 0;
};

/// Score descending, comment_id ascending on ties.
inline void sort_ranked(std::vector<RankedEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.comment_id < b.comment_id;
  });
}

/// Scores every rankable comment of the article and keeps the top k.
template <Scorer S>
RankedRecommendation rank_article(const S& scorer, std::string_view article_id,
                                  const CorpusStore& corpus, std::size_t k) {
  RankedRecommendation rec;
  rec.article_id = std::string(article_id);
  rec.k = k;
  for (auto i : candidate_comments(corpus, article_id)) {
    rec.entries.push_back({corpus.comment(i).comment_id, i, scorer.score(i)});
  }
  sort_ranked(rec.entries);
  if (rec.entries.size() > k) rec.entries.resize(k);
  return rec;
}

// ---------------------------------------------------------------------------
// NDCG

/// Binary-relevance NDCG@k. `relevance` lists the ranking in order;
/// `total_relevant` counts relevant items overall (also those outside the
/// ranking). Undefined when nothing is relevant.
inline std::optional<double> ndcg_from_relevance(std::span<const std::uint8_t> relevance,
                                                 std::size_t total_relevant, std::size_t k) {
  if (k == 0) throw Error("ndcg: k must be at least 1");
  if (total_relevant == 0) return std::nullopt;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, relevance.size()); ++i) {
    if (relevance[i]) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, total_relevant); ++i) {
    idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

inline std::optional<double> ndcg_at_k(std::span<const std::string> ranking,
                                       const std::unordered_set<std::string>& relevant,
                                       std::size_t k) {
  std::vector<std::uint8_t> rel;
  rel.reserve(ranking.size());
  for (const auto& id : ranking) rel.push_back(relevant.contains(id) ? 1 : 0);
  return ndcg_from_relevance(rel, relevant.size(), k);
}

// ---------------------------------------------------------------------------
// Classification metrics

struct ClassificationMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline ClassificationMetrics classification_metrics_from_counts(std::size_t tp, std::size_t fp,
                                                                std::size_t fn, std::size_t tn) {
  ClassificationMetrics m{tp, fp, fn, tn};
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

/// A row is predicted featured when its probability exceeds `threshold`.
template <class Label>
ClassificationMetrics classification_metrics(std::span<const double> probs,
                                             std::span<const Label> labels,
                                             double threshold = kProbabilityThreshold) {
  if (probs.size() != labels.size()) throw Error("classification metrics: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] > threshold;
    const bool actual = static_cast<bool>(labels[i]);
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  return classification_metrics_from_counts(tp, fp, fn, tn);
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha (nominal)

/// Items x raters; empty cells are missing labels.
class LabelMatrix {
 public:
  LabelMatrix(std::size_t items, std::size_t raters)
      : raters_(raters), cells_(items, std::vector<std::optional<int>>(raters)) {}

  std::size_t items() const { return cells_.size(); }
  std::size_t raters() const { return raters_; }

  void set(std::size_t item, std::size_t rater, int label) { cells_.at(item).at(rater) = label; }
  const std::optional<int>& at(std::size_t item, std::size_t rater) const {
    return cells_.at(item).at(rater);
  }

 private:
  std::size_t raters_;
  std::vector<std::vector<std::optional<int>>> cells_;
};

struct AgreementSummary {
  double alpha = 1.0;
  std::size_t pairable_items = 0;
  double pairable_values = 0.0;  // n in the coincidence matrix
  bool degenerate = false;       // no expected disagreement; alpha set to 1
};

/// Coincidence-matrix computation over items with at least two labels.
inline AgreementSummary agreement_summary(const LabelMatrix& m) {
  std::map<std::pair<int, int>, double> coincidence;
  AgreementSummary s;
  for (std::size_t i = 0; i < m.items(); ++i) {
    std::vector<int> values;
    for (std::size_t r = 0; r < m.raters(); ++r) {
      if (const auto& v = m.at(i, r)) values.push_back(*v);
    }
    if (values.size() < 2) continue;
    ++s.pairable_items;
    const double weight = 1.0 / static_cast<double>(values.size() - 1);
    for (std::size_t a = 0; a < values.size(); ++a) {
      for (std::size_t b = 0; b < values.size(); ++b) {
        if (a != b) coincidence[{values[a], values[b]}] += weight;
      }
    }
  }
  if (s.pairable_items == 0) throw Error("krippendorff alpha: no item has two or more labels");

  std::map<int, double> marginal;
  double n = 0.0, observed = 0.0;
  for (const auto& [cell, o] : coincidence) {
    marginal[cell.first] += o;
    n += o;
    if (cell.first != cell.second) observed += o;
  }
  s.pairable_values = n;
  double expected = 0.0;
  for (const auto& [c, nc] : marginal) {
    for (const auto& [k, nk] : marginal) {
      if (c != k) expected += nc * nk;
    }
  }
  const double d_o = observed / n;
  const double d_e = expected / (n * (n - 1.0));
  if (d_e == 0.0) {
    s.degenerate = true;
    s.alpha = 1.0;
    return s;
  }
  s.alpha = 1.0 - d_o / d_e;
  return s;
}

inline double krippendorff_alpha(const LabelMatrix& m) { return agreement_summary(m).alpha; }

// ---------------------------------------------------------------------------
// Article-level evaluation

inline const std::vector<std::size_t>& default_ks() {
  static const std::vector<std::size_t> ks = {3, 5, 10};
  return ks;
}

struct EvaluationReport {
  std::string label;
  ClassificationMetrics classification;
  std::vector<std::size_t> ks;
  /// NDCG per k, per article; nullopt for articles without featured comments.
  std::map<std::string, std::vector<std::optional<double>>> per_article;
  std::vector<double> mean_ndcg;
  std::size_t articles = 0;
  std::size_t skipped_articles = 0;

  nlohmann::json to_json() const {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [id, values] : per_article) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& v : values) row.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
      per[id] = std::move(row);
    }
    nlohmann::json means = nlohmann::json::object();
    for (std::size_t i = 0; i < ks.size(); ++i) means[std::to_string(ks[i])] = mean_ndcg[i];
    return {
        {"label", label},
        {"classification",
         {{"precision", classification.precision},
          {"recall", classification.recall},
          {"f1", classification.f1},
          {"tp", classification.tp},
          {"fp", classification.fp},
          {"fn", classification.fn},
          {"tn", classification.tn}}},
        {"mean_ndcg", std::move(means)},
        {"articles", articles},
        {"skipped_articles", skipped_articles},
        {"per_article_ndcg", std::move(per)},
    };
  }
};

/// Ranks every article's rankable comments by score and averages NDCG@k over
/// articles that have at least one featured comment.
template <Scorer S>
EvaluationReport evaluate_articles(const S& scorer, const CorpusStore& corpus,
                                   std::span<const std::string> articles,
                                   std::span<const std::size_t> ks = default_ks(),
                                   std::string label = {}) {
  if (ks.empty()) throw Error("evaluation needs at least one cutoff");
  EvaluationReport report;
  report.label = std::move(label);
  report.ks.assign(ks.begin(), ks.end());
  report.mean_ndcg.assign(ks.size(), 0.0);
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t evaluated = 0;
  for (const auto& article_id : articles) {
    ++report.articles;
    std::vector<RankedEntry> ranked;
    std::size_t featured = 0;
    for (auto i : candidate_comments(corpus, article_id)) {
      const double s = scorer.score(i);
      const bool actual = corpus.comment(i).featured();
      const bool predicted = s > scorer.threshold();
      featured += actual;
      if (predicted && actual) ++tp;
      else if (predicted) ++fp;
      else if (actual) ++fn;
      else ++tn;
      ranked.push_back({corpus.comment(i).comment_id, i, s});
    }
    sort_ranked(ranked);
    std::vector<std::uint8_t> rel;
    for (const auto& e : ranked) rel.push_back(corpus.comment(e.comment).featured() ? 1 : 0);
    auto& row = report.per_article[article_id];
    for (std::size_t j = 0; j < ks.size(); ++j) row.push_back(ndcg_from_relevance(rel, featured, ks[j]));
    if (featured == 0) {
      ++report.skipped_articles;
      continue;
    }
    ++evaluated;
    for (std::size_t j = 0; j < ks.size(); ++j) report.mean_ndcg[j] += *row[j];
  }
  if (evaluated > 0) {
    for (auto& m : report.mean_ndcg) m /= static_cast<double>(evaluated);
  }
  report.classification = classification_metrics_from_counts(tp, fp, fn, tn);
  return report;
}

/// Mean NDCG@k of uniformly random rankings, averaged over `shuffles` draws.
inline std::vector<double> random_ranker_ndcg(const CorpusStore& corpus,
                                              std::span<const std::string> articles,
                                              std::span<const std::size_t> ks, std::size_t shuffles,
                                              std::uint64_t seed) {
  std::vector<double> mean(ks.size(), 0.0);
  for (std::size_t s = 0; s < shuffles; ++s) {
    const auto report = evaluate_articles(RandomScorer(derive_seed(seed, s)), corpus, articles, ks);
    for (std::size_t j = 0; j < ks.size(); ++j) mean[j] += report.mean_ndcg[j];
  }
  for (auto& m : mean) m /= static_cast<double>(std::max<std::size_t>(shuffles, 1));
  return mean;
}

/// Plain-text table: one row per report with P/R/F1 and mean NDCG columns.
inline std::string format_reports(std::span<const EvaluationReport> reports) {
  std::ostringstream out;
  if (reports.empty()) return {};
  char buf[64];
  out << "Model                Precision  Recall  F1-score";
  for (auto k : reports.front().ks) {
    std::snprintf(buf, sizeof buf, "  NDCG@%-3zu", k);
    out << buf;
  }
  out << '\n';
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-20s %9.2f %7.2f %9.2f", r.label.c_str(),
                  r.classification.precision, r.classification.recall, r.classification.f1);
    out << buf;
    for (double m : r.mean_ndcg) {
      std::snprintf(buf, sizeof buf, "  %8.2f", m);
      out << buf;
    }
    out << '\n';
  }
  out << "articles: " << reports.front().articles
      << ", skipped (no featured comments): " << reports.front().skipped_articles << '\n';
  return out.str();
}

}  // namespace modq
