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

// Featurization: the 13 non-textual comment/user features, bag-of-words
// counts over a training vocabulary, joined comment embeddings, and the
// aligned design matrix handed to the forest.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/text.hpp"

namespace modq {

inline constexpr std::size_t kNonTextualCount = 13;

inline constexpr std::array<std::string_view, kNonTextualCount> kNonTextualFeatures = {
    "delta_minutes",    "reply_uptime",        "reply_count",    "respect_uptime",
    "respect_count",    "wordcount",           "wordspersentence", "total_posts_user",
    "featured_posts_user", "ratio_featured",   "ratio_rejected", "ratio_reply",
    "ratio_respect",
};

/// Column positions of the non-textual features.
enum NonTextual : std::size_t {
  kDeltaMinutes,
  kReplyUptime,
  kReplyCount,
  kRespectUptime,
  kRespectCount,
  kWordcount,
  kWordsPerSentence,
  kTotalPostsUser,
  kFeaturedPostsUser,
  kRatioFeatured,
  kRatioRejected,
  kRatioReply,
  kRatioRespect,
};

// ---------------------------------------------------------------------------
// User history

struct UserHistory {
  std::size_t total_posts_user = 0;
  std::size_t featured_posts_user = 0;
  double ratio_featured = 0.0;
  double ratio_rejected = 0.0;
  double ratio_reply = 0.0;    // mean replies per post
  double ratio_respect = 0.0;  // mean likes per post
  Minutes as_of = 0;

  friend bool operator==(const UserHistory&, const UserHistory&) = default;
};

namespace detail {

inline UserHistory history_from_sums(std::size_t posts, std::size_t featured, std::size_t rejected,
                                     std::int64_t replies, std::int64_t likes, Minutes as_of) {
  UserHistory h;
  h.as_of = as_of;
  h.total_posts_user = posts;
  h.featured_posts_user = featured;
  if (posts > 0) {
    const auto n = static_cast<double>(posts);
    h.ratio_featured = static_cast<double>(featured) / n;
    h.ratio_rejected = static_cast<double>(rejected) / n;
    h.ratio_reply = static_cast<double>(replies) / n;
    h.ratio_respect = static_cast<double>(likes) / n;
  }
  return h;
}

}  // namespace detail

/// Aggregates over every comment of `user_key` created strictly before `t`.
/// Linear in corpus size; UserHistoryIndex answers the same query in log time.
inline UserHistory user_history_at(std::string_view user_key, Minutes t, const CorpusStore& corpus) {
  std::size_t posts = 0, featured = 0, rejected = 0;
  std::int64_t replies = 0, likes = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& c = corpus.comment(i);
    if (c.user_key != user_key || c.created_at >= t) continue;
    ++posts;
    featured += c.featured();
    rejected += c.rejected();
    replies += static_cast<std::int64_t>(corpus.reply_count(i));
    likes += c.respect_count;
  }
  return detail::history_from_sums(posts, featured, rejected, replies, likes, t);
}

class UserHistoryIndex {
 public:
  explicit UserHistoryIndex(const CorpusStore& corpus) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& c = corpus.comment(i);
      auto& s = series_[c.user_key];
      s.times.push_back(c.created_at);
      s.featured.push_back(s.featured.back() + (c.featured() ? 1 : 0));
      s.rejected.push_back(s.rejected.back() + (c.rejected() ? 1 : 0));
      s.replies.push_back(s.replies.back() + static_cast<std::int64_t>(corpus.reply_count(i)));
      s.likes.push_back(s.likes.back() + c.respect_count);
    }
  }

  UserHistory at(std::string_view user_key, Minutes t) const {
    auto it = series_.find(std::string(user_key));
    if (it == series_.end()) return detail::history_from_sums(0, 0, 0, 0, 0, t);
    const auto& s = it->second;
    const auto k = static_cast<std::size_t>(
        std::lower_bound(s.times.begin(), s.times.end(), t) - s.times.begin());
    return detail::history_from_sums(k, static_cast<std::size_t>(s.featured[k]),
                                     static_cast<std::size_t>(s.rejected[k]), s.replies[k],
                                     s.likes[k], t);
  }

 private:
  // Prefix sums with a leading zero; times ascending because the corpus is.
  struct Series {
    std::vector<Minutes> times;
    std::vector<std::int64_t> featured{0}, rejected{0}, replies{0}, likes{0};
  };
  std::unordered_map<std::string, Series> series_;
};

// ---------------------------------------------------------------------------
// Non-textual features

using NonTextualVector = std::array<double, kNonTextualCount>;

inline NonTextualVector nontextual_features(std::size_t comment, const CorpusStore& corpus,
                                            const UserHistory& history) {
  const auto& c = corpus.comment(comment);
  NonTextualVector v{};
  const auto delta = std::max<Minutes>(1, c.created_at - c.article_published_at);
  const auto replies = static_cast<double>(corpus.reply_count(comment));
  const auto likes = static_cast<double>(c.respect_count);
  const auto words = static_cast<double>(text::word_count(c.text));
  v[kDeltaMinutes] = static_cast<double>(delta);
  v[kReplyCount] = replies;
  v[kReplyUptime] = replies / static_cast<double>(delta);
  v[kRespectCount] = likes;
  v[kRespectUptime] = likes / static_cast<double>(delta);
  v[kWordcount] = words;
  v[kWordsPerSentence] = words / static_cast<double>(text::sentence_count(c.text));
  v[kTotalPostsUser] = static_cast<double>(history.total_posts_user);
  v[kFeaturedPostsUser] = static_cast<double>(history.featured_posts_user);
  v[kRatioFeatured] = history.ratio_featured;
  v[kRatioRejected] = history.ratio_rejected;
  v[kRatioReply] = history.ratio_reply;
  v[kRatioRespect] = history.ratio_respect;
  return v;
}

inline NonTextualVector nontextual_features(std::size_t comment, const CorpusStore& corpus,
                                            const UserHistoryIndex& index) {
  const auto& c = corpus.comment(comment);
  return nontextual_features(comment, corpus, index.at(c.user_key, c.created_at));
}

inline NonTextualVector nontextual_features(std::size_t comment, const CorpusStore& corpus) {
  const auto& c = corpus.comment(comment);
  return nontextual_features(comment, corpus, user_history_at(c.user_key, c.created_at, corpus));
}

// ---------------------------------------------------------------------------
// Bag of words

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> doc_freq,
             text::StopwordSet stopwords)
      : tokens_(std::move(tokens)), doc_freq_(std::move(doc_freq)), stopwords_(std::move(stopwords)) {
    if (tokens_.size() != doc_freq_.size()) throw Error("vocabulary: token/frequency size mismatch");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!lookup_.emplace(tokens_[i], i).second) throw Error("vocabulary: duplicate token " + tokens_[i]);
    }
  }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::size_t>& doc_freq() const { return doc_freq_; }
  const text::StopwordSet& stopwords() const { return stopwords_; }
  std::size_t size() const { return tokens_.size(); }

  std::optional<std::size_t> index_of(const std::string& token) const {
    auto it = lookup_.find(token);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.doc_freq_ == b.doc_freq_ && a.stopwords_ == b.stopwords_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> doc_freq_;
  text::StopwordSet stopwords_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

inline constexpr std::size_t kDefaultVocabularySize = 413;

/// Keeps the `size` non-stopword tokens with the highest document frequency
/// (ties in byte order). Warns and keeps everything when fewer exist.
template <class Texts>
Vocabulary build_vocabulary(const Texts& texts, std::size_t size, text::StopwordSet stopwords) {
  if (size == 0) throw Error("vocabulary size must be positive");
  std::map<std::string, std::size_t, std::less<>> df;
  bool any_text = false;
  for (const auto& t : texts) {
    auto tokens = text::normalized_tokens(t);
    any_text = any_text || !tokens.empty();
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& tok : tokens) {
      if (!stopwords.contains(tok)) ++df[std::move(tok)];
    }
  }
  if (!any_text) throw Error("vocabulary: training texts are empty");
  std::vector<std::pair<std::string, std::size_t>> entries(df.begin(), df.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (entries.size() < size) {
    warn("vocabulary: only " + std::to_string(entries.size()) + " distinct tokens, requested " +
         std::to_string(size));
  } else {
    entries.resize(size);
  }
  std::vector<std::string> tokens;
  std::vector<std::size_t> freq;
  for (auto& [tok, n] : entries) {
    tokens.push_back(std::move(tok));
    freq.push_back(n);
  }
  return Vocabulary(std::move(tokens), std::move(freq), std::move(stopwords));
}

inline Vocabulary build_vocabulary(const CorpusStore& corpus, std::span<const std::size_t> comments,
                                   std::size_t size, text::StopwordSet stopwords) {
  std::vector<std::string_view> texts;
  texts.reserve(comments.size());
  for (auto i : comments) texts.push_back(corpus.comment(i).text);
  return build_vocabulary(texts, size, std::move(stopwords));
}

inline Vocabulary build_vocabulary(const CorpusStore& corpus, std::span<const std::size_t> comments,
                                   std::size_t size, const std::string& stopword_path) {
  return build_vocabulary(corpus, comments, size, text::load_stopwords(stopword_path));
}

/// Raw occurrence counts in vocabulary order.
inline void bow_counts(std::string_view text, const Vocabulary& vocab, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& tok : text::normalized_tokens(text)) {
    if (auto k = vocab.index_of(tok)) out[*k] += 1.0;
  }
}

inline std::vector<double> bow_vector(std::string_view text, const Vocabulary& vocab) {
  std::vector<double> v(vocab.size());
  bow_counts(text, vocab, v);
  return v;
}

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(const std::string& comment_id) const {
    auto it = vectors.find(comment_id);
    return it == vectors.end() ? nullptr : &it->second;
  }

  void insert(std::string comment_id, std::vector<double> v) {
    if (v.empty()) throw Error("embedding for " + comment_id + " is empty");
    if (dim == 0) dim = v.size();
    if (v.size() != dim) {
      throw Error("embedding for " + comment_id + " has length " + std::to_string(v.size()) +
                  ", expected " + std::to_string(dim));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw Error("embedding for " + comment_id + " is not finite");
    }
    if (!vectors.emplace(comment_id, std::move(v)).second) {
      throw Error("duplicate embedding for " + comment_id);
    }
  }
};

inline constexpr char kEmbeddingMagic[8] = {'M', 'O', 'D', 'Q', 'E', 'M', 'B', '1'};

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::istream& in) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int b = in.get();
    if (b == EOF) throw Error("embedding file truncated");
    value |= static_cast<T>(static_cast<unsigned char>(b)) << (8 * i);
  }
  return value;
}

}  // namespace detail

/// Binary layout (little endian): magic "MODQEMB1", u32 dim, u64 count, then
/// per record u32 id length, id bytes, dim x f32.
inline void write_embeddings_binary(const EmbeddingTable& table, std::ostream& out) {
  std::map<std::string_view, const std::vector<double>*> sorted;
  for (const auto& [id, v] : table.vectors) sorted.emplace(id, &v);
  out.write(kEmbeddingMagic, sizeof kEmbeddingMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim));
  detail::put_le<std::uint64_t>(out, sorted.size());
  for (const auto& [id, v] : sorted) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (double x : *v) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
}

inline void write_embeddings_jsonl(const EmbeddingTable& table, std::ostream& out) {
  std::map<std::string_view, const std::vector<double>*> sorted;
  for (const auto& [id, v] : table.vectors) sorted.emplace(id, &v);
  for (const auto& [id, v] : sorted) {
    out << nlohmann::json{{"comment_id", id}, {"vector", *v}}.dump() << '\n';
  }
}

/// Reads either format; the binary one is recognized by its magic.
inline EmbeddingTable load_embeddings(std::istream& in) {
  EmbeddingTable table;
  char magic[sizeof kEmbeddingMagic] = {};
  in.read(magic, sizeof magic);
  if (in.gcount() == sizeof magic && std::memcmp(magic, kEmbeddingMagic, sizeof magic) == 0) {
    const auto dim = detail::get_le<std::uint32_t>(in);
    const auto count = detail::get_le<std::uint64_t>(in);
    if (dim == 0) throw Error("embedding file declares dimension 0");
    for (std::uint64_t r = 0; r < count; ++r) {
      const auto len = detail::get_le<std::uint32_t>(in);
      std::string id(len, '\0');
      in.read(id.data(), len);
      if (static_cast<std::uint32_t>(in.gcount()) != len) throw Error("embedding file truncated");
      std::vector<double> v(dim);
      for (auto& x : v) x = std::bit_cast<float>(detail::get_le<std::uint32_t>(in));
      table.insert(std::move(id), std::move(v));
    }
    return table;
  }
  in.clear();
  in.seekg(0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("embedding line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("comment_id") || !j["comment_id"].is_string() || !j.contains("vector") ||
        !j["vector"].is_array()) {
      throw Error("embedding line " + std::to_string(line_no) + ": expected comment_id and vector");
    }
    table.insert(j["comment_id"].get<std::string>(), j["vector"].get<std::vector<double>>());
  }
  if (table.vectors.empty()) throw Error("embedding file holds no vectors");
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read embedding file: " + path);
  return load_embeddings(in);
}

// ---------------------------------------------------------------------------
// Schema and design matrix

struct FeatureSchema {
  std::vector<std::string> names;

  std::size_t size() const { return names.size(); }

  /// Short content digest of the ordered names.
  std::string id() const {
    Sha256 h;
    for (const auto& n : names) h.update(n).update(std::string_view("\n", 1));
    return h.hex().substr(0, 16);
  }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

/// Everything needed to featurize a comment identically at training and
/// inference time.
struct FeatureSpec {
  bool use_bow = false;
  bool use_embeddings = false;
  Vocabulary vocab;
  std::size_t embedding_dim = 0;

  FeatureSchema schema() const {
    FeatureSchema s;
    for (auto n : kNonTextualFeatures) s.names.emplace_back(n);
    if (use_bow) {
      for (const auto& t : vocab.tokens()) s.names.push_back("bow:" + t);
    }
    if (use_embeddings) {
      for (std::size_t d = 0; d < embedding_dim; ++d) s.names.push_back("emb:" + std::to_string(d));
    }
    return s;
  }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

class Featurizer {
 public:
  Featurizer(const CorpusStore& corpus, FeatureSpec spec, const EmbeddingTable* embeddings = nullptr)
      : corpus_(&corpus), spec_(std::move(spec)), embeddings_(embeddings), history_(corpus),
        schema_(spec_.schema()) {
    if (spec_.use_embeddings) {
      if (embeddings_ == nullptr) throw SchemaMismatchError("features require an embedding table");
      if (embeddings_->dim != spec_.embedding_dim) {
        throw SchemaMismatchError("embedding dimension " + std::to_string(embeddings_->dim) +
                                  " does not match expected " + std::to_string(spec_.embedding_dim));
      }
    }
  }

  const FeatureSchema& schema() const { return schema_; }
  const FeatureSpec& spec() const { return spec_; }
  const CorpusStore& corpus() const { return *corpus_; }
  const UserHistoryIndex& history() const { return history_; }

  void fill(std::size_t comment, std::span<double> out) const {
    if (out.size() != schema_.size()) throw SchemaMismatchError("row buffer has wrong length");
    const auto base = nontextual_features(comment, *corpus_, history_);
    std::copy(base.begin(), base.end(), out.begin());
    std::size_t pos = kNonTextualCount;
    if (spec_.use_bow) {
      bow_counts(corpus_->comment(comment).text, spec_.vocab, out.subspan(pos, spec_.vocab.size()));
      pos += spec_.vocab.size();
    }
    if (spec_.use_embeddings) {
      const auto& id = corpus_->comment(comment).comment_id;
      const auto* v = embeddings_->find(id);
      if (v == nullptr) throw Error("missing embedding for comment " + id);
      std::copy(v->begin(), v->end(), out.begin() + static_cast<std::ptrdiff_t>(pos));
    }
  }

  std::vector<double> row(std::size_t comment) const {
    std::vector<double> v(schema_.size());
    fill(comment, v);
    return v;
  }

 private:
  const CorpusStore* corpus_;
  FeatureSpec spec_;
  const EmbeddingTable* embeddings_;
  UserHistoryIndex history_;
  FeatureSchema schema_;
};

/// Dense row-major feature rows with binary featured labels.
struct DesignMatrix {
  FeatureSchema schema;
  std::size_t rows = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> comment_ids;

  std::size_t cols() const { return schema.size(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols(), cols());
  }

  std::size_t featured_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  }

  void validate() const {
    if (values.size() != rows * cols() || labels.size() != rows || comment_ids.size() != rows) {
      throw SchemaMismatchError("design matrix dimensions are inconsistent");
    }
  }

  std::string digest() const {
    Sha256 h;
    h.update(schema.id()).update(values);
    h.update(std::string_view(reinterpret_cast<const char*>(labels.data()), labels.size()));
    for (const auto& id : comment_ids) h.update(id).update(std::string_view("\n", 1));
    return h.hex();
  }
};

inline DesignMatrix assemble_matrix(std::span<const std::size_t> comments, const Featurizer& featurizer) {
  DesignMatrix m;
  m.schema = featurizer.schema();
  m.rows = comments.size();
  m.values.resize(m.rows * m.cols());
  m.labels.reserve(m.rows);
  m.comment_ids.reserve(m.rows);
  const auto& corpus = featurizer.corpus();
  for (std::size_t r = 0; r < m.rows; ++r) {
    featurizer.fill(comments[r], std::span<double>(m.values).subspan(r * m.cols(), m.cols()));
    m.labels.push_back(corpus.comment(comments[r]).featured() ? 1 : 0);
    m.comment_ids.push_back(corpus.comment(comments[r]).comment_id);
  }
  return m;
}

inline DesignMatrix assemble_matrix(std::span<const std::size_t> comments, const CorpusStore& corpus,
                                    const FeatureSpec& spec,
                                    const EmbeddingTable* embeddings = nullptr) {
  return assemble_matrix(comments, Featurizer(corpus, spec, embeddings));
}

}  // namespace modq
