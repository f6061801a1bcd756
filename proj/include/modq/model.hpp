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

// A trained model bundle (featurization spec + forest) and its JSON container.
//
// The container is compact JSON with sorted keys. Numbers are written in the
// shortest form that parses back to the same double, so save -> load -> save
// reproduces the file byte for byte. Trees are stored as parallel arrays.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/features.hpp"
#include "modq/forest.hpp"

namespace modq {

inline constexpr std::string_view kModelFormat = "modq-model";
inline constexpr int kModelFormatVersion = 1;

struct Model {
  FeatureSpec features;
  Forest forest;

  friend bool operator==(const Model&, const Model&) = default;
};

namespace model_detail {

inline std::string_view to_string(MaxFeatures::Kind k) {
  switch (k) {
    case MaxFeatures::Kind::kSqrt:
      return "sqrt";
    case MaxFeatures::Kind::kAll:
      return "all";
    case MaxFeatures::Kind::kFixed:
      return "fixed";
  }
  return "sqrt";
}

inline MaxFeatures::Kind parse_kind(const std::string& s) {
  if (s == "sqrt") return MaxFeatures::Kind::kSqrt;
  if (s == "all") return MaxFeatures::Kind::kAll;
  if (s == "fixed") return MaxFeatures::Kind::kFixed;
  throw Error("model: unknown max_features kind " + s);
}

}  // namespace model_detail

inline nlohmann::json hyperparams_to_json(const Hyperparams& hp) {
  return {
      {"n_estimators", hp.n_estimators},
      {"max_depth", hp.max_depth ? nlohmann::json(*hp.max_depth) : nlohmann::json(nullptr)},
      {"min_samples_split", hp.min_samples_split},
      {"max_features", {{"kind", model_detail::to_string(hp.max_features.kind)}, {"k", hp.max_features.k}}},
      {"bootstrap", hp.bootstrap},
      {"seed", hp.seed},
  };
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.n_estimators = j.at("n_estimators").get<std::size_t>();
  if (!j.at("max_depth").is_null()) hp.max_depth = j.at("max_depth").get<std::size_t>();
  hp.min_samples_split = j.at("min_samples_split").get<std::size_t>();
  hp.max_features.kind = model_detail::parse_kind(j.at("max_features").at("kind").get<std::string>());
  hp.max_features.k = j.at("max_features").at("k").get<std::size_t>();
  hp.bootstrap = j.at("bootstrap").get<bool>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

inline nlohmann::json to_json(const Model& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.forest.trees) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(),
                   value = nlohmann::json::array(), weight = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.featured_frequency);
      weight.push_back(n.weight);
    }
    trees.push_back({{"feature", std::move(feature)},
                     {"threshold", std::move(threshold)},
                     {"left", std::move(left)},
                     {"right", std::move(right)},
                     {"value", std::move(value)},
                     {"weight", std::move(weight)}});
  }
  const auto& spec = m.features;
  return {
      {"format", kModelFormat},
      {"version", kModelFormatVersion},
      {"hyperparams", hyperparams_to_json(m.forest.hyperparams)},
      {"schema", {{"id", m.forest.schema.id()}, {"features", m.forest.schema.names}}},
      {"featurizer",
       {{"use_bow", spec.use_bow},
        {"use_embeddings", spec.use_embeddings},
        {"embedding_dim", spec.embedding_dim},
        {"vocabulary",
         {{"tokens", spec.vocab.tokens()},
          {"doc_freq", spec.vocab.doc_freq()},
          {"stopwords", spec.vocab.stopwords()}}}}},
      {"training",
       {{"rows", m.forest.manifest.rows},
        {"featured", m.forest.manifest.featured},
        {"data_digest", m.forest.manifest.data_digest}}},
      {"trees", std::move(trees)},
  };
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw Error("model: not a modq model");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error("model: unsupported format version " + j.at("version").dump());
    }
    Model m;
    const auto& fz = j.at("featurizer");
    m.features.use_bow = fz.at("use_bow").get<bool>();
    m.features.use_embeddings = fz.at("use_embeddings").get<bool>();
    m.features.embedding_dim = fz.at("embedding_dim").get<std::size_t>();
    const auto& vocab = fz.at("vocabulary");
    m.features.vocab = Vocabulary(vocab.at("tokens").get<std::vector<std::string>>(),
                                  vocab.at("doc_freq").get<std::vector<std::size_t>>(),
                                  vocab.at("stopwords").get<text::StopwordSet>());

    m.forest.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    m.forest.schema.names = j.at("schema").at("features").get<std::vector<std::string>>();
    if (m.forest.schema.id() != j.at("schema").at("id").get<std::string>()) {
      throw SchemaMismatchError("model: schema id does not match feature names");
    }
    if (!(m.features.schema() == m.forest.schema)) {
      throw SchemaMismatchError("model: featurizer does not produce the forest's schema");
    }
    const auto& tr = j.at("training");
    m.forest.manifest = {tr.at("rows").get<std::size_t>(), tr.at("featured").get<std::size_t>(),
                         tr.at("data_digest").get<std::string>()};

    for (const auto& t : j.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<std::int32_t>>();
      const auto right = t.at("right").get<std::vector<std::int32_t>>();
      const auto value = t.at("value").get<std::vector<double>>();
      const auto weight = t.at("weight").get<std::vector<double>>();
      const std::size_t n = feature.size();
      if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
          weight.size() != n) {
        throw Error("model: tree arrays differ in length");
      }
      std::vector<TreeNode> nodes(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (feature[i] >= static_cast<std::int32_t>(m.forest.schema.size())) {
          throw SchemaMismatchError("model: split feature index out of range");
        }
        nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i], weight[i]};
      }
      m.forest.trees.emplace_back(std::move(nodes));
    }
    if (m.forest.trees.empty()) throw Error("model: no trees");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model: malformed container: ") + e.what());
  }
}

inline std::string serialize_model(const Model& m) { return to_json(m).dump(); }

inline Model parse_model(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model: not valid JSON: ") + e.what());
  }
  return model_from_json(j);
}

/// Content digest of the serialized model; doubles as its version string.
inline std::string model_digest(const Model& m) { return sha256_hex(serialize_model(m)); }

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write model file: " + path);
  out << serialize_model(m);
  if (!out) throw Error("failed writing model file: " + path);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

/// Featurizes `rows` and trains a forest on them.
inline Model train_model(const CorpusStore& corpus, std::span<const std::size_t> rows,
                         FeatureSpec spec, const Hyperparams& hp,
                         const EmbeddingTable* embeddings = nullptr, std::size_t workers = 1) {
  Featurizer featurizer(corpus, spec, embeddings);
  const auto matrix = assemble_matrix(rows, featurizer);
  return Model{std::move(spec), train_forest(matrix, hp, workers)};
}

}  // namespace modq
