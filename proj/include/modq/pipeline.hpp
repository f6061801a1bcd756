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

// Glue between the modules: split plans, model presets and the end-to-end
// synth -> split -> downsample -> train -> evaluate run.

#include <array>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/features.hpp"
#include "modq/forest.hpp"
#include "modq/model.hpp"
#include "modq/rank_eval.hpp"
#include "modq/synth.hpp"

namespace modq {

/// Non-featured/featured training compositions offered by the CLI.
inline constexpr std::array<double, 6> kDownsamplePresets = {0.01, 0.02, 0.05, 0.10, 0.20, 0.25};

struct SplitPlan {
  SplitSpec spec;
  ArticleSet set1, set2;
  TrainValTest tvt;
  std::vector<std::size_t> train_downsampled;
};

inline SplitPlan make_split_plan(const CorpusStore& corpus, const SplitSpec& spec) {
  spec.validate();
  SplitPlan plan;
  plan.spec = spec;
  std::tie(plan.set1, plan.set2) = chronological_split(corpus, spec.chrono_fraction);
  plan.tvt = train_val_test_split(corpus, plan.set1, spec);
  plan.train_downsampled = downsample(corpus, plan.tvt.train, spec.downsample_ratio, spec.seed);
  return plan;
}

namespace detail {
inline nlohmann::json ids_of(const CorpusStore& corpus, std::span<const std::size_t> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (auto i : rows) out.push_back(corpus.comment(i).comment_id);
  return out;
}
inline std::vector<std::size_t> rows_of(const CorpusStore& corpus, const nlohmann::json& ids) {
  std::vector<std::size_t> out;
  for (const auto& id : ids) {
    const auto s = id.get<std::string>();
    const auto i = corpus.find(s);
    if (!i) throw NotFoundError("split plan names unknown comment " + s);
    out.push_back(*i);
  }
  return out;
}
}  // namespace detail

/// Comments are stored by id so a plan stays valid for any ingest of the
/// same records.
inline nlohmann::json to_json(const CorpusStore& corpus, const SplitPlan& p) {
  const auto featured_in = [&](std::span<const std::size_t> rows) {
    std::size_t n = 0;
    for (auto i : rows) n += corpus.comment(i).featured();
    return n;
  };
  return {{"spec",
           {{"chrono", p.spec.chrono_fraction},
            {"tvt", {p.spec.train_fraction, p.spec.validation_fraction, p.spec.test_fraction}},
            {"downsample", p.spec.downsample_ratio},
            {"seed", p.spec.seed}}},
          {"set1", p.set1},
          {"set2", p.set2},
          {"summary",
           {{"train", {p.tvt.train.size(), featured_in(p.tvt.train)}},
            {"validation", {p.tvt.validation.size(), featured_in(p.tvt.validation)}},
            {"test", {p.tvt.test.size(), featured_in(p.tvt.test)}},
            {"train_downsampled", {p.train_downsampled.size(), featured_in(p.train_downsampled)}}}},
          {"train", detail::ids_of(corpus, p.tvt.train)},
          {"validation", detail::ids_of(corpus, p.tvt.validation)},
          {"test", detail::ids_of(corpus, p.tvt.test)},
          {"train_downsampled", detail::ids_of(corpus, p.train_downsampled)}};
}

inline SplitPlan split_plan_from_json(const CorpusStore& corpus, const nlohmann::json& j) {
  try {
    SplitPlan p;
    const auto& s = j.at("spec");
    p.spec.chrono_fraction = s.at("chrono").get<double>();
    p.spec.train_fraction = s.at("tvt").at(0).get<double>();
    p.spec.validation_fraction = s.at("tvt").at(1).get<double>();
    p.spec.test_fraction = s.at("tvt").at(2).get<double>();
    p.spec.downsample_ratio = s.at("downsample").get<double>();
    p.spec.seed = s.at("seed").get<std::uint64_t>();
    p.set1 = j.at("set1").get<ArticleSet>();
    p.set2 = j.at("set2").get<ArticleSet>();
    p.tvt.train = detail::rows_of(corpus, j.at("train"));
    p.tvt.validation = detail::rows_of(corpus, j.at("validation"));
    p.tvt.test = detail::rows_of(corpus, j.at("test"));
    p.train_downsampled = detail::rows_of(corpus, j.at("train_downsampled"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("split plan: ") + e.what());
  }
}

inline void save_split_plan(const CorpusStore& corpus, const SplitPlan& p, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write split plan: " + path);
  out << to_json(corpus, p).dump(1) << '\n';
}

inline SplitPlan load_split_plan(const CorpusStore& corpus, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read split plan: " + path);
  try {
    return split_plan_from_json(corpus, nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("split plan " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Presets

enum class Preset { kRf, kRfBow, kRfEmb };

inline Preset parse_preset(std::string_view s) {
  if (s == "rf") return Preset::kRf;
  if (s == "rf_bow") return Preset::kRfBow;
  if (s == "rf_emb") return Preset::kRfEmb;
  throw Error("unknown preset '" + std::string(s) + "' (expected rf, rf_bow or rf_emb)");
}

inline std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::kRf: return "rf";
    case Preset::kRfBow: return "rf_bow";
    case Preset::kRfEmb: return "rf_emb";
  }
  return "?";
}

inline Hyperparams preset_hyperparams(Preset p, std::uint64_t seed) {
  switch (p) {
    case Preset::kRf: return Hyperparams::rf(seed);
    case Preset::kRfBow: return Hyperparams::rf_bow(seed);
    case Preset::kRfEmb: return Hyperparams::rf_emb(seed);
  }
  throw Error("unknown preset");
}

/// The vocabulary is always learned from `vocab_rows` (the training rows).
inline FeatureSpec preset_features(Preset p, const CorpusStore& corpus,
                                   std::span<const std::size_t> vocab_rows,
                                   const EmbeddingTable* embeddings,
                                   text::StopwordSet stopwords = text::default_dutch_stopwords(),
                                   std::size_t vocab_size = kDefaultVocabularySize) {
  FeatureSpec spec;
  if (p == Preset::kRfBow) {
    spec.use_bow = true;
    spec.vocab = build_vocabulary(corpus, vocab_rows, vocab_size, std::move(stopwords));
  }
  if (p == Preset::kRfEmb) {
    if (embeddings == nullptr) throw Error("preset rf_emb needs an embedding table");
    spec.use_embeddings = true;
    spec.embedding_dim = embeddings->dim;
  }
  return spec;
}

inline Model train_preset(Preset p, const CorpusStore& corpus, std::span<const std::size_t> rows,
                          std::uint64_t seed, const EmbeddingTable* embeddings = nullptr,
                          std::size_t workers = 1) {
  auto spec = preset_features(p, corpus, rows, embeddings);
  return train_model(corpus, rows, std::move(spec), preset_hyperparams(p, seed), embeddings, workers);
}

// ---------------------------------------------------------------------------
// End-to-end run

struct PipelineResult {
  std::string corpus_digest;
  std::string model_digest;
  EvaluationReport report;
};

/// synth -> split -> downsample -> train -> evaluate on set 2.
inline PipelineResult run_pipeline(const SynthConfig& cfg, const SplitSpec& split, Preset preset,
                                   std::size_t workers,
                                   std::span<const std::size_t> ks = default_ks()) {
  const auto corpus = synth_generate(cfg, split.seed);
  std::ostringstream jsonl;
  write_jsonl(corpus, jsonl);
  const auto plan = make_split_plan(corpus, split);
  const auto model = train_preset(preset, corpus, plan.train_downsampled, split.seed, nullptr, workers);
  const ForestScorer scorer(model, corpus);
  return {sha256_hex(jsonl.str()), model_digest(model),
          evaluate_articles(scorer, corpus, plan.set2, ks, std::string(to_string(preset)))};
}

}  // namespace modq
