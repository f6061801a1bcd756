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


#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <atomic>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "modq/service.hpp"
#include "modq/synth.hpp"
#include "test_util.hpp"

namespace modq {
namespace {

using nlohmann::json;

std::shared_ptr<const CorpusStore> shared_corpus() {
  static const auto corpus = std::make_shared<const CorpusStore>(synth_generate(testing::small_synth(30), 77));
  return corpus;
}

/// Single-leaf forest: every comment gets probability p.
std::shared_ptr<const Model> constant_model(double p) {
  Model m;
  m.forest.schema = m.features.schema();
  m.forest.trees.emplace_back(std::vector<TreeNode>{{-1, 0.0, -1, -1, p, 1.0}});
  return std::make_shared<const Model>(std::move(m));
}

/// Stump on respect_count: liked comments are recommended.
std::shared_ptr<const Model> likes_model(double cut) {
  Model m;
  m.forest.schema = m.features.schema();
  const auto f = static_cast<std::int32_t>(
      std::find(m.forest.schema.names.begin(), m.forest.schema.names.end(), "respect_count") -
      m.forest.schema.names.begin());
  m.forest.trees.emplace_back(std::vector<TreeNode>{
      {f, cut, 1, 2, 0.3, 2.0}, {-1, 0.0, -1, -1, 0.1, 1.0}, {-1, 0.0, -1, -1, 0.8, 1.0}});
  return std::make_shared<const Model>(std::move(m));
}

std::shared_ptr<const Model> trained_model() {
  static const auto model = [] {
    testing::QuietWarnings quiet;
    std::vector<std::size_t> rows(shared_corpus()->size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::erase_if(rows, [](std::size_t i) { return shared_corpus()->comment(i).rejected(); });
    Hyperparams hp = Hyperparams::rf(4);
    hp.n_estimators = 40;
    return std::make_shared<const Model>(train_model(*shared_corpus(), rows, FeatureSpec{}, hp));
  }();
  return model;
}

std::string biggest_article(const CorpusStore& corpus) {
  std::string best;
  std::size_t n = 0;
  for (const auto& [id, a] : corpus.articles()) {
    const auto c = candidate_comments(corpus, id).size();
    if (c > n) n = c, best = id;
  }
  return best;
}

PickEvent pick(std::string article, std::string comment, std::string rater, bool decision, Minutes at = 0) {
  return {std::move(article), std::move(comment), std::move(rater), decision, 26297280 + at};
}

// ---------------------------------------------------------------------------
// Survey construction

void check_survey(const Service& svc, const std::string& article, std::uint64_t seed) {
  const auto& corpus = svc.corpus();
  const auto s = svc.build_survey(article, seed);
  const auto cands = candidate_comments(corpus, article);
  std::size_t rec = 0;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    ids.insert(s.items[i].comment_id);
    rec += s.recommended[i];
  }
  ASSERT_EQ(ids.size(), s.items.size()) << "duplicate items";
  ASSERT_LE(rec, kMaxRecommendedPerSurvey);
  ASSERT_EQ(s.items.size() - rec, std::min(rec, cands.size() - rec));
  for (const auto& id : ids) {
    const auto i = corpus.find(id);
    ASSERT_TRUE(i);
    ASSERT_EQ(corpus.comment(*i).article_id, article);
    ASSERT_FALSE(corpus.comment(*i).rejected());
  }
}

TEST(Survey, AllAboveThresholdCapsAtTen) {
  Service svc(shared_corpus(), constant_model(0.9));
  const auto article = biggest_article(svc.corpus());
  const auto cands = candidate_comments(svc.corpus(), article);
  ASSERT_GT(cands.size(), 20u);
  const auto s = svc.build_survey(article, 1);
  EXPECT_EQ(std::count(s.recommended.begin(), s.recommended.end(), true), 10);
  EXPECT_EQ(s.items.size(), 20u);
  // Ties fall back to comment id order, so the ten smallest ids are recommended.
  std::vector<std::string> sorted;
  for (auto i : cands) sorted.push_back(svc.corpus().comment(i).comment_id);
  std::sort(sorted.begin(), sorted.end());
  std::set<std::string> expected(sorted.begin(), sorted.begin() + 10), got;
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    if (s.recommended[i]) got.insert(s.items[i].comment_id);
  }
  EXPECT_EQ(got, expected);
  check_survey(svc, article, 1);
}

TEST(Survey, NothingAboveThreshold) {
  Service svc(shared_corpus(), constant_model(0.5));  // 0.5 is not above 0.5
  const auto s = svc.build_survey(biggest_article(svc.corpus()), 3);
  EXPECT_TRUE(s.items.empty());
}

TEST(Survey, RulesHoldForEveryArticleAndSeed) {
  Service svc(shared_corpus(), trained_model());
  const ForestScorer scorer(*trained_model(), svc.corpus());
  for (const auto& [id, a] : svc.corpus().articles()) {
    if (candidate_comments(svc.corpus(), id).empty()) continue;
    for (std::uint64_t seed : {0u, 1u, 99u}) check_survey(svc, id, seed);
    // Recommended items are exactly the top comments above 0.5.
    const auto s = svc.build_survey(id, 5);
    const auto top = rank_article(scorer, id, svc.corpus(), kMaxRecommendedPerSurvey);
    std::set<std::string> expected, got;
    for (const auto& e : top.entries) {
      if (e.probability > 0.5) expected.insert(e.comment_id);
    }
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      if (s.recommended[i]) got.insert(s.items[i].comment_id);
    }
    ASSERT_EQ(got, expected) << id;
  }
}

TEST(Survey, SmallArticleUsesAllRemaining) {
  Service svc(shared_corpus(), likes_model(-1.0));  // every comment scores 0.8
  std::string small;
  for (const auto& [id, a] : svc.corpus().articles()) {
    const auto n = candidate_comments(svc.corpus(), id).size();
    if (n > 0 && n < 10) small = id;
  }
  if (small.empty()) GTEST_SKIP() << "synthetic corpus has no article with fewer than 10 comments";
  const auto s = svc.build_survey(small, 2);
  EXPECT_EQ(s.items.size(), candidate_comments(svc.corpus(), small).size());
  check_survey(svc, small, 2);
}

TEST(Survey, DeterministicPerSeed) {
  Service svc(shared_corpus(), constant_model(0.9));
  const auto article = biggest_article(svc.corpus());
  EXPECT_EQ(survey_payload(svc.build_survey(article, 11)), survey_payload(svc.build_survey(article, 11)));
  EXPECT_NE(survey_payload(svc.build_survey(article, 11)), survey_payload(svc.build_survey(article, 12)));
}

TEST(Survey, PayloadIsBlind) {
  Service svc(shared_corpus(), constant_model(0.9));
  const auto payload = survey_payload(svc.build_survey(biggest_article(svc.corpus()), 4));
  ASSERT_FALSE(payload.at("items").empty());
  const std::set<std::string> allowed = {"comment_id", "text", "prior_posts", "prior_featured",
                                         "rejection_rate", "respect_points"};
  for (const auto& item : payload.at("items")) {
    for (const auto& [key, value] : item.items()) EXPECT_TRUE(allowed.contains(key)) << key;
  }
  const auto dump = payload.dump();
  EXPECT_EQ(dump.find("recommend"), std::string::npos);
  EXPECT_EQ(dump.find("probab"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Picks and reports

TEST(Picks, LatestDecisionWins) {
  Service svc(shared_corpus(), constant_model(0.9));
  const auto article = biggest_article(svc.corpus());
  const auto c = svc.corpus().comment(candidate_comments(svc.corpus(), article)[0]).comment_id;
  svc.record_pick(pick(article, c, "r1", true, 1));
  svc.record_pick(pick(article, c, "r1", false, 2));
  const auto snap = svc.picks().snapshot();
  ASSERT_EQ(snap.size(), 1u);
  EXPECT_FALSE(snap[0].decision);
  EXPECT_THROW(svc.record_pick(pick(article, "nope", "r1", true)), NotFoundError);
  EXPECT_THROW(svc.record_pick(pick("other-article", c, "r1", true)), NotFoundError);
}

TEST(Picks, JsonRoundTripAndValidation) {
  const auto e = pick("a", "c", "r", true, 42);
  EXPECT_EQ(pick_from_json(to_json(e)), e);
  auto bad = to_json(e);
  bad["at"] = "yesterday";
  EXPECT_THROW(pick_from_json(bad), Error);
  bad = to_json(e);
  bad.erase("decision");
  EXPECT_THROW(pick_from_json(bad), Error);
  bad = to_json(e);
  bad["rater_id"] = "";
  EXPECT_THROW(pick_from_json(bad), Error);
}

TEST(Picks, SurviveRestartAndCompact) {
  testing::TempDir dir;
  const auto path = dir.file("picks.jsonl");
  const auto article = biggest_article(*shared_corpus());
  const auto cands = candidate_comments(*shared_corpus(), article);
  std::vector<PickEvent> expected;
  {
    Service svc(shared_corpus(), constant_model(0.9), nullptr, path);
    for (int round = 0; round < 40; ++round) {
      for (std::size_t j = 0; j < 5; ++j) {
        svc.record_pick(pick(article, shared_corpus()->comment(cands[j]).comment_id, "r" + std::to_string(j % 2),
                             (round + j) % 3 == 0, round));
      }
    }
    expected = svc.picks().snapshot();
    EXPECT_EQ(expected.size(), 5u);
  }
  std::size_t lines = 0;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) ++lines;
  }
  EXPECT_LT(lines, 200u);  // compaction kicked in
  EXPECT_GE(lines, 5u);
  {
    Service reloaded(shared_corpus(), constant_model(0.9), nullptr, path);
    EXPECT_EQ(reloaded.picks().snapshot(), expected);
  }
  PickLog log(path);
  log.compact();
  std::ifstream in(path);
  std::string line;
  lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 5u);
  EXPECT_EQ(PickLog(path).snapshot(), expected);
}

TEST(Picks, BadLinesAreSkipped) {
  testing::TempDir dir;
  const auto path = dir.file("picks.jsonl");
  {
    std::ofstream out(path);
    out << to_json(pick("a", "c1", "r", true)).dump() << "\n{not json\n\n"
        << to_json(pick("a", "c2", "r", false)).dump() << "\n";
  }
  std::vector<std::string> warnings;
  auto prev = set_warning_sink([&](std::string_view w) { warnings.emplace_back(w); });
  PickLog log(path);
  set_warning_sink(prev);
  EXPECT_EQ(log.size(), 2u);
  EXPECT_EQ(warnings.size(), 1u);
}

/// Four comments rated by two raters: (1,1), (0,0), (1,0), (0,0).
TEST(Report, AlphaFixture) {
  Service svc(shared_corpus(), constant_model(0.9));
  const auto article = biggest_article(svc.corpus());
  const auto cands = candidate_comments(svc.corpus(), article);
  const int a[] = {1, 0, 1, 0}, b[] = {1, 0, 0, 0};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& id = svc.corpus().comment(cands[i]).comment_id;
    svc.record_pick(pick(article, id, "alice", a[i] == 1));
    svc.record_pick(pick(article, id, "bob", b[i] == 1));
  }
  const auto r = svc.survey_report();
  ASSERT_TRUE(r.alpha);
  EXPECT_NEAR(*r.alpha, 0.53333, 1e-4);
  EXPECT_EQ(r.pairable_items, 4u);
  ASSERT_EQ(r.articles.size(), 1u);
  EXPECT_EQ(r.articles[0].raters, 2u);
  EXPECT_EQ(r.articles[0].k, 10u);
}

TEST(Report, NoOverlapStillScoresRanking) {
  Service svc(shared_corpus(), constant_model(0.9));
  const auto article = biggest_article(svc.corpus());
  const auto cands = candidate_comments(svc.corpus(), article);
  svc.record_pick(pick(article, svc.corpus().comment(cands[0]).comment_id, "alice", true));
  svc.record_pick(pick(article, svc.corpus().comment(cands[1]).comment_id, "bob", false));
  const auto r = svc.survey_report();
  EXPECT_FALSE(r.alpha);
  EXPECT_FALSE(r.alpha_note.empty());
  EXPECT_TRUE(r.to_json().at("alpha").is_null());
  ASSERT_EQ(r.articles.size(), 1u);
  ASSERT_TRUE(r.articles[0].ndcg);  // bob approved nothing, so only alice counts
  ASSERT_TRUE(r.mean_ndcg);
}

TEST(Report, RaterApprovingRecommendationsScoresOne) {
  Service svc(shared_corpus(), trained_model());
  const ForestScorer scorer(*trained_model(), svc.corpus());
  std::string article;
  std::vector<std::string> top;
  for (const auto& [id, a] : svc.corpus().articles()) {
    if (candidate_comments(svc.corpus(), id).empty()) continue;
    top.clear();
    for (const auto& e : rank_article(scorer, id, svc.corpus(), 10).entries) {
      if (e.probability > 0.5) top.push_back(e.comment_id);
    }
    if (top.size() >= 2) {
      article = id;
      break;
    }
  }
  ASSERT_FALSE(article.empty()) << "no article with two recommended comments";
  for (const auto& c : top) svc.record_pick(pick(article, c, "solo", true));
  for (auto i : candidate_comments(svc.corpus(), article)) {
    const auto& id = svc.corpus().comment(i).comment_id;
    if (std::find(top.begin(), top.end(), id) == top.end()) svc.record_pick(pick(article, id, "solo", false));
  }
  const auto r = svc.survey_report();
  ASSERT_TRUE(r.mean_ndcg);
  EXPECT_DOUBLE_EQ(*r.mean_ndcg, 1.0);
  EXPECT_EQ(r.articles[0].k, top.size());
  const std::vector<std::string> filter = {"nothing-here"};
  EXPECT_THROW(svc.survey_report(filter), NotFoundError);
}

// ---------------------------------------------------------------------------
// HTTP

class HttpFixture : public ::testing::Test {
 protected:
  void start(std::shared_ptr<const Model> model, std::string picks = {}) {
    service_ = std::make_unique<Service>(shared_corpus(), std::move(model), nullptr, std::move(picks));
    server_ = make_http_server(*service_);
    port_ = server_->bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
  }
  void TearDown() override {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  json get(const std::string& path, int expected_status) {
    auto res = client().Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expected_status) << path << " " << res->body;
    auto body = json::parse(res->body);
    EXPECT_EQ(body.at("model_version"), service_->model_version()) << path;
    return body;
  }
  json post_pick(const json& body, int expected_status, const std::string& rater = {}) {
    httplib::Headers headers;
    if (!rater.empty()) headers.emplace(kRaterHeader, rater);
    auto res = client().Post("/picks", headers, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected_status) << res->body;
    auto out = json::parse(res->body);
    EXPECT_TRUE(out.contains("model_version"));
    return out;
  }

  std::unique_ptr<Service> service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpFixture, Routes) {
  start(trained_model());
  EXPECT_EQ(get("/healthz", 200).at("status"), "ok");
  EXPECT_EQ(service_->model_version().size(), 16u);
  const auto articles = get("/articles", 200).at("articles");
  EXPECT_EQ(articles.size(), shared_corpus()->articles().size());
  const auto article = biggest_article(*shared_corpus());

  const auto rec = get("/articles/" + article + "/recommendations?k=3", 200);
  ASSERT_EQ(rec.at("entries").size(), 3u);
  double prev = 2.0;
  for (const auto& e : rec.at("entries")) {
    const double p = e.at("probability");
    EXPECT_LE(p, prev);
    prev = p;
    double sum = e.at("explanation").at("bias");
    for (const auto& c : e.at("explanation").at("contributions")) sum += c.at("value").get<double>();
    EXPECT_NEAR(sum, p, 1e-9);
    EXPECT_TRUE(e.contains("prior_posts") && e.contains("respect_points") && e.contains("text"));
  }
  EXPECT_EQ(get("/articles/" + article + "/recommendations", 200).at("entries").size(),
            std::min<std::size_t>(5, candidate_comments(*shared_corpus(), article).size()));

  const auto survey = get("/articles/" + article + "/survey?seed=7", 200);
  EXPECT_EQ(survey.at("items"), survey_payload(service_->build_survey(article, 7)).at("items"));

  const auto& c = shared_corpus()->comment(candidate_comments(*shared_corpus(), article)[0]).comment_id;
  const auto recorded = post_pick({{"article_id", article}, {"comment_id", c}, {"decision", true}}, 200, "carol");
  EXPECT_EQ(recorded.at("pick").at("rater_id"), "carol");
  post_pick({{"article_id", article}, {"comment_id", c}, {"decision", false}, {"rater_id", "dave"},
             {"at", "2021-03-04T05:06:00Z"}},
            200);
  const auto report = get("/reports/survey?articles=" + article, 200);
  EXPECT_EQ(report.at("pairable_items"), 1);
  EXPECT_EQ(report.at("articles").size(), 1u);
}

TEST_F(HttpFixture, Errors) {
  start(trained_model());
  const auto article = biggest_article(*shared_corpus());
  get("/articles/no-such-article/recommendations", 404);
  get("/articles/no-such-article/survey", 404);
  get("/no/such/route", 404);
  get("/reports/survey", 404);  // nothing recorded yet
  get("/articles/" + article + "/recommendations?k=abc", 400);
  get("/articles/" + article + "/recommendations?k=0", 400);
  get("/articles/" + article + "/survey?seed=-1", 400);
  post_pick(json::array({1, 2}), 400, "x");
  post_pick({{"article_id", article}, {"comment_id", "zzz"}, {"decision", true}}, 404, "x");
  post_pick({{"article_id", article}, {"decision", true}}, 400, "x");
  post_pick({{"article_id", article}, {"comment_id", "zzz"}, {"decision", true}}, 400);  // no rater
  auto res = client().Post("/picks", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(HttpFixture, SchemaMismatchIs409) {
  auto broken = std::make_shared<Model>(*trained_model());
  broken->forest.schema.names.push_back("extra_feature");
  start(broken);
  const auto article = biggest_article(*shared_corpus());
  get("/healthz", 200);
  get("/articles/" + article + "/recommendations", 409);
  get("/articles/" + article + "/survey", 409);
  service_->swap_model(trained_model());
  get("/articles/" + article + "/recommendations", 200);
}

TEST_F(HttpFixture, ConcurrentRaters) {
  testing::TempDir dir;
  start(constant_model(0.9), dir.file("picks.jsonl"));
  const auto article = biggest_article(*shared_corpus());
  const auto cands = candidate_comments(*shared_corpus(), article);
  constexpr int kRaters = 6;
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int r = 0; r < kRaters; ++r) {
    threads.emplace_back([&, r] {
      auto cli = client();
      for (std::size_t j = 0; j < cands.size(); ++j) {
        const json body = {{"article_id", article},
                           {"comment_id", shared_corpus()->comment(cands[j]).comment_id},
                           {"decision", (j + r) % 2 == 0}};
        auto res = cli.Post("/picks", {{kRaterHeader, "rater" + std::to_string(r)}}, body.dump(),
                            "application/json");
        if (!res || res->status != 200) ++failures;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(failures.load(), 0);
  EXPECT_EQ(service_->picks().size(), kRaters * cands.size());
  EXPECT_EQ(PickLog(dir.file("picks.jsonl")).snapshot(), service_->picks().snapshot());
  const auto report = get("/reports/survey", 200);
  EXPECT_EQ(report.at("pairable_items"), cands.size());
}

}  // namespace
}  // namespace modq
