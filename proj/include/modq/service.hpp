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

// Moderator-facing service: ranked recommendations with explanations, blind
// survey construction, an append-only pick log, and the survey report
// (inter-rater agreement plus NDCG of moderator picks against the
// recommendations). The HTTP layer in make_http_server() is a thin JSON
// adapter over Service.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/explain.hpp"
#include "modq/features.hpp"
#include "modq/model.hpp"
#include "modq/rank_eval.hpp"
#include "modq/time.hpp"

namespace modq {

inline constexpr std::size_t kMaxRecommendedPerSurvey = 10;

// ---------------------------------------------------------------------------
// Picks

struct PickEvent {
  std::string article_id;
  std::string comment_id;
  std::string rater_id;
  bool decision = false;  // feature-worthy
  Minutes at = 0;

  friend bool operator==(const PickEvent&, const PickEvent&) = default;
};

inline nlohmann::json to_json(const PickEvent& e) {
  return {{"article_id", e.article_id},
          {"comment_id", e.comment_id},
          {"rater_id", e.rater_id},
          {"decision", e.decision},
          {"at", format_rfc3339(e.at)}};
}

inline PickEvent pick_from_json(const nlohmann::json& j) {
  PickEvent e;
  try {
    e.article_id = j.at("article_id").get<std::string>();
    e.comment_id = j.at("comment_id").get<std::string>();
    e.rater_id = j.at("rater_id").get<std::string>();
    e.decision = j.at("decision").get<bool>();
    auto at = parse_rfc3339(j.at("at").get<std::string>());
    if (!at) throw Error("pick: malformed timestamp");
    e.at = *at;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(std::string("pick: ") + ex.what());
  }
  if (e.article_id.empty() || e.comment_id.empty() || e.rater_id.empty()) {
    throw Error("pick: empty identifier");
  }
  return e;
}

/// Append-only JSONL log; the latest event per (article, comment, rater)
/// wins. The file is rewritten to one line per key once superseded lines
/// dominate. An empty path keeps the log in memory.
class PickLog {
 public:
  using Key = std::tuple<std::string, std::string, std::string>;

  explicit PickLog(std::string path = {}) : path_(std::move(path)) {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    if (!in) throw Error("cannot read pick log: " + path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        apply(pick_from_json(nlohmann::json::parse(line)));
        ++lines_;
      } catch (const std::exception& e) {
        warn("pick log " + path_ + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  void record(const PickEvent& e) {
    std::unique_lock lock(mutex_);
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app | std::ios::binary);
      if (!out) throw Error("cannot append to pick log: " + path_);
      out << to_json(e).dump() << '\n';
      out.flush();
      if (!out) throw Error("failed writing pick log: " + path_);
      ++lines_;
    }
    apply(e);
    if (!path_.empty() && lines_ >= 2 * latest_.size() + 64) compact_locked();
  }

  std::vector<PickEvent> snapshot() const {
    std::shared_lock lock(mutex_);
    std::vector<PickEvent> out;
    out.reserve(latest_.size());
    for (const auto& [key, e] : latest_) out.push_back(e);
    return out;
  }

  void compact() {
    std::unique_lock lock(mutex_);
    if (!path_.empty()) compact_locked();
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return latest_.size();
  }

 private:
  void apply(const PickEvent& e) { latest_[Key{e.article_id, e.comment_id, e.rater_id}] = e; }

  void compact_locked() {
    const std::string tmp = path_ + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
      if (!out) throw Error("cannot write " + tmp);
      for (const auto& [key, e] : latest_) out << to_json(e).dump() << '\n';
    }
    std::filesystem::rename(tmp, path_);
    lines_ = latest_.size();
  }

  std::string path_;
  mutable std::shared_mutex mutex_;
  std::map<Key, PickEvent> latest_;
  std::size_t lines_ = 0;
};

// ---------------------------------------------------------------------------
// Surveys

/// Fields a moderator sees next to a comment.
struct DisplayFields {
  std::size_t prior_posts = 0;
  std::size_t prior_featured = 0;
  double rejection_rate = 0.0;
  std::int64_t respect_points = 0;
};

struct SurveyItem {
  std::string comment_id;
  std::string text;
  DisplayFields display;
};

struct SurveySet {
  std::string article_id;
  std::uint64_t shuffle_seed = 0;
  std::vector<SurveyItem> items;
  std::vector<bool> recommended;  // server side only, parallel to items
};

struct ArticleSurveyScore {
  std::string article_id;
  std::size_t k = 0;  // number of recommended comments used as cutoff
  std::size_t raters = 0;
  std::optional<double> ndcg;
};

struct SurveyReport {
  std::optional<double> alpha;
  std::size_t pairable_items = 0;
  std::string alpha_note;
  std::vector<ArticleSurveyScore> articles;
  std::optional<double> mean_ndcg;

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& a : articles) {
      rows.push_back({{"article_id", a.article_id},
                      {"k", a.k},
                      {"raters", a.raters},
                      {"ndcg", a.ndcg ? nlohmann::json(*a.ndcg) : nlohmann::json(nullptr)}});
    }
    return {{"alpha", alpha ? nlohmann::json(*alpha) : nlohmann::json(nullptr)},
            {"alpha_note", alpha_note},
            {"pairable_items", pairable_items},
            {"articles", std::move(rows)},
            {"mean_ndcg", mean_ndcg ? nlohmann::json(*mean_ndcg) : nlohmann::json(nullptr)}};
  }
};

/// Client view of a survey. Carries no recommendation flag and no score.
inline nlohmann::json survey_payload(const SurveySet& s) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : s.items) {
    items.push_back({{"comment_id", it.comment_id},
                     {"text", it.text},
                     {"prior_posts", it.display.prior_posts},
                     {"prior_featured", it.display.prior_featured},
                     {"rejection_rate", it.display.rejection_rate},
                     {"respect_points", it.display.respect_points}});
  }
  return {{"article_id", s.article_id}, {"seed", s.shuffle_seed}, {"items", std::move(items)}};
}

// ---------------------------------------------------------------------------
// Service

class Service {
 public:
  Service(std::shared_ptr<const CorpusStore> corpus, std::shared_ptr<const Model> model,
          std::shared_ptr<const EmbeddingTable> embeddings = nullptr, std::string picks_path = {})
      : corpus_(std::move(corpus)), embeddings_(std::move(embeddings)), picks_(std::move(picks_path)),
        history_(*corpus_) {
    swap_model(std::move(model));
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Atomically replaces the model; requests already running keep the old one.
  void swap_model(std::shared_ptr<const Model> model) {
    auto loaded = std::make_shared<Loaded>();
    loaded->model = std::move(model);
    loaded->version = model_digest(*loaded->model).substr(0, 16);
    try {
      loaded->scorer = std::make_unique<ForestScorer>(*loaded->model, *corpus_, embeddings_.get());
    } catch (const SchemaMismatchError& e) {
      loaded->mismatch = e.what();
    }
    std::lock_guard lock(model_mutex_);
    loaded_ = std::move(loaded);
  }

  std::string model_version() const { return current()->version; }
  const CorpusStore& corpus() const { return *corpus_; }

  nlohmann::json list_articles() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, a] : corpus_->articles()) {
      out.push_back({{"article_id", id},
                     {"published_at", format_rfc3339(a.published_at)},
                     {"comments", candidate_comments(*corpus_, id).size()}});
    }
    return out;
  }

  DisplayFields display_fields(std::size_t comment) const {
    const auto& c = corpus_->comment(comment);
    const auto h = history_.at(c.user_key, c.created_at);
    return {h.total_posts_user, h.featured_posts_user, h.ratio_rejected, c.respect_count};
  }

  /// Top-k ranking with display fields and the contribution breakdown.
  nlohmann::json get_recommendations(const std::string& article_id, std::size_t k) const {
    const auto loaded = current();
    const auto& scorer = scorer_of(*loaded);
    if (k == 0) throw Error("k must be positive");
    const auto rec = rank_article(scorer, article_id, *corpus_, k);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : rec.entries) {
      const auto b = decompose_comment(scorer, e.comment);
      nlohmann::json contribs = nlohmann::json::array();
      for (const auto& [f, c] : b.ranked()) {
        contribs.push_back({{"feature", loaded->model->forest.schema.names[f]}, {"value", c}});
      }
      const auto d = display_fields(e.comment);
      entries.push_back({{"comment_id", e.comment_id},
                         {"probability", e.probability},
                         {"text", corpus_->comment(e.comment).text},
                         {"prior_posts", d.prior_posts},
                         {"prior_featured", d.prior_featured},
                         {"rejection_rate", d.rejection_rate},
                         {"respect_points", d.respect_points},
                         {"explanation",
                          {{"bias", b.bias}, {"predicted", b.predicted}, {"contributions", std::move(contribs)}}}});
    }
    return {{"model_version", loaded->version},
            {"article_id", article_id},
            {"k", k},
            {"entries", std::move(entries)}};
  }

  /// Recommended = probability > 0.5, at most 10, best first; the same
  /// number of other comments is drawn uniformly (or all that remain), and the
  /// union is shuffled.
  SurveySet build_survey(const std::string& article_id, std::uint64_t seed) const {
    const auto loaded = current();
    const auto& scorer = scorer_of(*loaded);
    const auto candidates = candidate_comments(*corpus_, article_id);
    if (candidates.empty()) throw Error("article " + article_id + " has no comments");

    std::vector<RankedEntry> ranked;
    for (auto i : candidates) ranked.push_back({corpus_->comment(i).comment_id, i, scorer.score(i)});
    sort_ranked(ranked);
    std::vector<std::size_t> recommended;
    for (const auto& e : ranked) {
      if (e.probability <= kProbabilityThreshold || recommended.size() == kMaxRecommendedPerSurvey) break;
      recommended.push_back(e.comment);
    }
    std::vector<std::size_t> remainder;
    for (auto i : candidates) {
      if (std::find(recommended.begin(), recommended.end(), i) == recommended.end()) remainder.push_back(i);
    }
    Rng rng(derive_seed(seed, 0x737276));
    const std::size_t extra = std::min(recommended.size(), remainder.size());
    for (std::size_t i = 0; i < extra; ++i) {
      std::swap(remainder[i], remainder[i + static_cast<std::size_t>(rng.below(remainder.size() - i))]);
    }
    std::vector<std::pair<std::size_t, bool>> chosen;
    for (auto i : recommended) chosen.emplace_back(i, true);
    for (std::size_t i = 0; i < extra; ++i) chosen.emplace_back(remainder[i], false);
    rng.shuffle(chosen.begin(), chosen.end());

    SurveySet s;
    s.article_id = article_id;
    s.shuffle_seed = seed;
    for (const auto& [i, rec] : chosen) {
      s.items.push_back({corpus_->comment(i).comment_id, corpus_->comment(i).text, display_fields(i)});
      s.recommended.push_back(rec);
    }
    return s;
  }

  void record_pick(const PickEvent& e) {
    const auto i = corpus_->find(e.comment_id);
    if (!i || corpus_->comment(*i).article_id != e.article_id) {
      throw NotFoundError("comment " + e.comment_id + " is not part of article " + e.article_id);
    }
    picks_.record(e);
  }

  const PickLog& picks() const { return picks_; }

  /// Agreement over items rated by two or more raters, and per article the
  /// NDCG of each rater's approvals against the recommended comments (cutoff
  /// = number recommended), averaged over raters.
  SurveyReport survey_report(std::span<const std::string> article_filter = {}) const {
    const auto loaded = current();
    const auto& scorer = scorer_of(*loaded);
    auto events = picks_.snapshot();
    if (!article_filter.empty()) {
      std::erase_if(events, [&](const PickEvent& e) {
        return std::find(article_filter.begin(), article_filter.end(), e.article_id) == article_filter.end();
      });
    }
    if (events.empty()) throw NotFoundError("no picks recorded");

    std::map<std::string, std::size_t> raters;
    std::map<std::pair<std::string, std::string>, std::size_t> items;
    for (const auto& e : events) {
      raters.emplace(e.rater_id, raters.size());
      items.emplace(std::pair{e.article_id, e.comment_id}, items.size());
    }
    LabelMatrix labels(items.size(), raters.size());
    for (const auto& e : events) {
      labels.set(items.at({e.article_id, e.comment_id}), raters.at(e.rater_id), e.decision ? 1 : 0);
    }
    SurveyReport report;
    try {
      const auto summary = agreement_summary(labels);
      report.alpha = summary.alpha;
      report.pairable_items = summary.pairable_items;
      if (summary.degenerate) report.alpha_note = "all labels identical; alpha set to 1";
    } catch (const Error&) {
      report.alpha_note = "unavailable: no comment was rated by two or more raters";
    }

    std::map<std::string, std::map<std::string, std::unordered_set<std::string>>> approvals;
    for (const auto& e : events) {
      auto& per_rater = approvals[e.article_id][e.rater_id];
      if (e.decision) per_rater.insert(e.comment_id);
    }
    double total = 0.0;
    std::size_t scored = 0;
    for (const auto& [article_id, per_rater] : approvals) {
      ArticleSurveyScore row;
      row.article_id = article_id;
      row.raters = per_rater.size();
      auto ranking = rank_article(scorer, article_id, *corpus_, kMaxRecommendedPerSurvey);
      std::erase_if(ranking.entries,
                    [](const RankedEntry& e) { return e.probability <= kProbabilityThreshold; });
      row.k = ranking.entries.size();
      std::vector<std::string> ids;
      for (const auto& e : ranking.entries) ids.push_back(e.comment_id);
      double sum = 0.0;
      std::size_t n = 0;
      if (row.k > 0) {
        for (const auto& [rater, approved] : per_rater) {
          if (auto v = ndcg_at_k(ids, approved, row.k)) {
            sum += *v;
            ++n;
          }
        }
      }
      if (n > 0) {
        row.ndcg = sum / static_cast<double>(n);
        total += *row.ndcg;
        ++scored;
      }
      report.articles.push_back(std::move(row));
    }
    if (scored > 0) report.mean_ndcg = total / static_cast<double>(scored);
    return report;
  }

 private:
  struct Loaded {
    std::shared_ptr<const Model> model;
    std::string version;
    std::unique_ptr<ForestScorer> scorer;
    std::string mismatch;
  };

  std::shared_ptr<const Loaded> current() const {
    std::lock_guard lock(model_mutex_);
    return loaded_;
  }

  static const ForestScorer& scorer_of(const Loaded& l) {
    if (!l.scorer) throw SchemaMismatchError(l.mismatch);
    return *l.scorer;
  }

  std::shared_ptr<const CorpusStore> corpus_;
  std::shared_ptr<const EmbeddingTable> embeddings_;
  PickLog picks_;
  UserHistoryIndex history_;
  mutable std::mutex model_mutex_;
  std::shared_ptr<const Loaded> loaded_;
};

// ---------------------------------------------------------------------------
// HTTP

inline constexpr const char* kRaterHeader = "X-Rater-Id";

/// Routes:
///   GET  /healthz
///   GET  /articles
///   GET  /articles/{id}/recommendations?k=5
///   GET  /articles/{id}/survey?seed=0
///   POST /picks              (rater from X-Rater-Id, or rater_id in the body)
///   GET  /reports/survey?articles=a,b
/// Every response body is a JSON object with a model_version field.
inline std::unique_ptr<httplib::Server> make_http_server(Service& service) {
  auto server = std::make_unique<httplib::Server>();
  auto reply = [&service](httplib::Response& res, int status, nlohmann::json body) {
    body["model_version"] = service.model_version();
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  // Runs a handler, mapping library errors to HTTP statuses.
  auto guarded = [reply](auto handler) {
    return [reply, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const NotFoundError& e) {
        reply(res, 404, {{"error", e.what()}});
      } catch (const SchemaMismatchError& e) {
        reply(res, 409, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 400, {{"error", e.what()}});
      }
    };
  };
  auto number_param = [](const httplib::Request& req, const char* name, std::uint64_t fallback) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
      throw Error(std::string("query parameter ") + name + " must be a non-negative integer");
    }
    return out;
  };

  server->Get("/healthz", guarded([reply](const httplib::Request&, httplib::Response& res) {
                reply(res, 200, {{"status", "ok"}});
              }));
  server->Get("/articles", guarded([reply, &service](const httplib::Request&, httplib::Response& res) {
                reply(res, 200, {{"articles", service.list_articles()}});
              }));
  server->Get(R"(/articles/([^/]+)/recommendations)",
              guarded([reply, number_param, &service](const httplib::Request& req, httplib::Response& res) {
                const auto k = static_cast<std::size_t>(number_param(req, "k", 5));
                reply(res, 200, service.get_recommendations(req.matches[1].str(), k));
              }));
  server->Get(R"(/articles/([^/]+)/survey)",
              guarded([reply, number_param, &service](const httplib::Request& req, httplib::Response& res) {
                const auto seed = number_param(req, "seed", 0);
                reply(res, 200, survey_payload(service.build_survey(req.matches[1].str(), seed)));
              }));
  server->Post("/picks", guarded([reply, &service](const httplib::Request& req, httplib::Response& res) {
                 nlohmann::json body;
                 try {
                   body = nlohmann::json::parse(req.body);
                 } catch (const nlohmann::json::exception&) {
                   throw Error("request body is not valid JSON");
                 }
                 if (!body.is_object()) throw Error("request body must be a JSON object");
                 if (req.has_header(kRaterHeader)) body["rater_id"] = req.get_header_value(kRaterHeader);
                 if (!body.contains("at")) {
                   const auto now = std::chrono::duration_cast<std::chrono::minutes>(
                       std::chrono::system_clock::now().time_since_epoch());
                   body["at"] = format_rfc3339(now.count());
                 }
                 const auto event = pick_from_json(body);
                 service.record_pick(event);
                 reply(res, 200, {{"status", "recorded"}, {"pick", to_json(event)}});
               }));
  server->Get("/reports/survey",
              guarded([reply, &service](const httplib::Request& req, httplib::Response& res) {
                std::vector<std::string> filter;
                if (req.has_param("articles")) {
                  std::stringstream ss(req.get_param_value("articles"));
                  std::string id;
                  while (std::getline(ss, id, ',')) {
                    if (!id.empty()) filter.push_back(id);
                  }
                }
                reply(res, 200, service.survey_report(filter).to_json());
              }));
  // Unknown routes and methods still get a JSON body.
  server->set_error_handler([reply](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    reply(res, res.status, {{"error", httplib::status_message(res.status)}});
    return httplib::Server::HandlerResponse::Handled;
  });
  return server;
}

}  // namespace modq
