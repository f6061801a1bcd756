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

#include <fstream>
#include <numeric>
#include <sstream>
#include <set>
#include <string>

#include "modq/model.hpp"
#include "modq/pipeline.hpp"
#include "modq/synth.hpp"
#include "test_util.hpp"

namespace modq {
namespace {

struct Fixture {
  CorpusStore corpus = synth_generate(testing::small_synth(30), 17);
  std::vector<std::size_t> rows = candidate_comments(corpus, [&] {
    ArticleSet all;
    for (const auto& [id, a] : corpus.articles()) all.push_back(id);
    return all;
  }());
};

Model small_bow_model(const Fixture& fx, std::uint64_t seed = 1) {
  testing::QuietWarnings quiet;
  FeatureSpec spec;
  spec.use_bow = true;
  spec.vocab = build_vocabulary(fx.corpus, fx.rows, 30, text::default_dutch_stopwords());
  Hyperparams hp;
  hp.n_estimators = 8;
  hp.max_depth = 10;
  hp.seed = seed;
  return train_model(fx.corpus, fx.rows, spec, hp);
}

TEST(ModelFile, RoundTripIsByteIdentical) {
  const Fixture fx;
  const auto model = small_bow_model(fx);
  testing::TempDir dir;
  save_model(model, dir.file("m.json"));
  const auto loaded = load_model(dir.file("m.json"));
  EXPECT_TRUE(loaded.forest == model.forest);
  EXPECT_TRUE(loaded.features == model.features);
  save_model(loaded, dir.file("m2.json"));
  std::ifstream a(dir.file("m.json")), b(dir.file("m2.json"));
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(model_digest(model), model_digest(loaded));
}

TEST(ModelFile, PredictionsSurviveRoundTrip) {
  const Fixture fx;
  const auto model = small_bow_model(fx);
  const auto loaded = parse_model(serialize_model(model));
  const Featurizer f(fx.corpus, loaded.features);
  for (auto i : fx.rows) {
    const auto x = f.row(i);
    ASSERT_EQ(model.forest.predict_proba(x), loaded.forest.predict_proba(x));
  }
}

TEST(ModelFile, SelfDescribing) {
  const Fixture fx;
  const auto j = to_json(small_bow_model(fx));
  EXPECT_EQ(j.at("format"), "modq-model");
  EXPECT_EQ(j.at("version"), 1);
  EXPECT_EQ(j.at("schema").at("features").size(), 13u + 30u);
  EXPECT_EQ(j.at("featurizer").at("vocabulary").at("tokens").size(), 30u);
  EXPECT_EQ(j.at("hyperparams").at("n_estimators"), 8);
  EXPECT_EQ(j.at("trees").size(), 8u);
  EXPECT_EQ(j.at("training").at("rows"), fx.rows.size());
}

TEST(ModelFile, RejectsCorruptContainers) {
  const Fixture fx;
  const auto good = to_json(small_bow_model(fx));
  EXPECT_THROW(parse_model("not json"), Error);
  EXPECT_THROW(parse_model("{}"), Error);

  auto wrong_version = good;
  wrong_version["version"] = 99;
  EXPECT_THROW(model_from_json(wrong_version), Error);

  auto tampered = good;
  tampered["schema"]["features"][0] = "something_else";
  EXPECT_THROW(model_from_json(tampered), SchemaMismatchError);

  auto ragged = good;
  ragged["trees"][0]["left"].erase(0);
  EXPECT_THROW(model_from_json(ragged), Error);

  auto bad_index = good;
  for (auto& f : bad_index["trees"][0]["feature"]) {
    if (f.get<int>() >= 0) {
      f = 5000;
      break;
    }
  }
  EXPECT_THROW(model_from_json(bad_index), SchemaMismatchError);

  auto no_trees = good;
  no_trees["trees"] = nlohmann::json::array();
  EXPECT_THROW(model_from_json(no_trees), Error);

  EXPECT_THROW(load_model("/nonexistent/model.json"), Error);
}

TEST(ModelFile, DigestTracksContent) {
  const Fixture fx;
  EXPECT_EQ(model_digest(small_bow_model(fx, 1)), model_digest(small_bow_model(fx, 1)));
  EXPECT_NE(model_digest(small_bow_model(fx, 1)), model_digest(small_bow_model(fx, 2)));
}

// ---------------------------------------------------------------------------
// Split plans and presets

TEST(SplitPlan, JsonRoundTrip) {
  const Fixture fx;
  testing::QuietWarnings quiet;
  SplitSpec spec;
  spec.seed = 4;
  spec.downsample_ratio = 0.2;
  const auto plan = make_split_plan(fx.corpus, spec);
  EXPECT_EQ(plan.set1.size(), 15u);
  EXPECT_EQ(plan.set2.size(), 15u);
  testing::TempDir dir;
  save_split_plan(fx.corpus, plan, dir.file("plan.json"));
  const auto again = load_split_plan(fx.corpus, dir.file("plan.json"));
  EXPECT_EQ(again.set1, plan.set1);
  EXPECT_EQ(again.set2, plan.set2);
  EXPECT_EQ(again.tvt.train, plan.tvt.train);
  EXPECT_EQ(again.tvt.validation, plan.tvt.validation);
  EXPECT_EQ(again.tvt.test, plan.tvt.test);
  EXPECT_EQ(again.train_downsampled, plan.train_downsampled);
  EXPECT_EQ(again.spec.seed, 4u);
  EXPECT_DOUBLE_EQ(again.spec.downsample_ratio, 0.2);
}

TEST(SplitPlan, TrainingRowsComeFromSetOne) {
  const Fixture fx;
  testing::QuietWarnings quiet;
  const auto plan = make_split_plan(fx.corpus, SplitSpec{});
  const std::set<std::string> set1(plan.set1.begin(), plan.set1.end());
  for (const auto* rows : {&plan.tvt.train, &plan.tvt.validation, &plan.tvt.test, &plan.train_downsampled}) {
    for (auto i : *rows) {
      ASSERT_TRUE(set1.contains(fx.corpus.comment(i).article_id));
      ASSERT_FALSE(fx.corpus.comment(i).rejected());
    }
  }
}

TEST(SplitPlan, UnknownCommentRejected) {
  const Fixture fx;
  testing::QuietWarnings quiet;
  auto j = to_json(fx.corpus, make_split_plan(fx.corpus, SplitSpec{}));
  j["train"].push_back("no-such-comment");
  EXPECT_THROW(split_plan_from_json(fx.corpus, j), NotFoundError);
}

TEST(Presets, FeatureLayouts) {
  const Fixture fx;
  testing::QuietWarnings quiet;
  EXPECT_EQ(preset_features(Preset::kRf, fx.corpus, fx.rows, nullptr).schema().size(), 13u);
  const auto bow = preset_features(Preset::kRfBow, fx.corpus, fx.rows, nullptr);
  EXPECT_TRUE(bow.use_bow);
  EXPECT_GT(bow.vocab.size(), 0u);
  EXPECT_THROW(preset_features(Preset::kRfEmb, fx.corpus, fx.rows, nullptr), Error);
  EXPECT_EQ(parse_preset("rf_bow"), Preset::kRfBow);
  EXPECT_EQ(to_string(parse_preset("rf_emb")), "rf_emb");
  EXPECT_THROW(parse_preset("svm"), Error);
  EXPECT_EQ(preset_hyperparams(Preset::kRf, 5), Hyperparams::rf(5));
  EXPECT_EQ(kDownsamplePresets.size(), 6u);
}

TEST(Presets, DownsamplePresetsAreExact) {
  for (double ratio : kDownsamplePresets) {
    const std::size_t kept = downsample_target(3047, ratio);
    const double share = 3047.0 / static_cast<double>(3047 + kept);
    EXPECT_NEAR(share, ratio, 1e-12) << ratio;
  }
}

}  // namespace
}  // namespace modq
