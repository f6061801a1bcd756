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

// Comment corpora: the record type, an immutable article-grouped store, JSONL
// ingestion and export, and the article/comment level splits used to build
// training data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "modq/common.hpp"
#include "modq/time.hpp"

namespace modq {

enum class Status : std::uint8_t { kRejected, kPublished, kFeatured };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::kRejected:
      return "rejected";
    case Status::kPublished:
      return "published";
    case Status::kFeatured:
      return "featured";
  }
  return "published";
}

inline std::optional<Status> parse_status(std::string_view s) {
  if (s == "rejected") return Status::kRejected;
  if (s == "published") return Status::kPublished;
  if (s == "featured") return Status::kFeatured;
  return std::nullopt;
}

struct CommentRecord {
  std::string comment_id;
  std::string article_id;
  std::string user_key;
  Minutes created_at = 0;
  Minutes article_published_at = 0;
  std::string text;
  std::int64_t respect_count = 0;
  std::optional<std::string> parent_id;
  Status status = Status::kPublished;

  bool featured() const { return status == Status::kFeatured; }
  bool rejected() const { return status == Status::kRejected; }

  friend bool operator==(const CommentRecord&, const CommentRecord&) = default;
};

struct SourceManifest {
  std::vector<std::string> files;
  std::vector<std::string> file_digests;
  std::size_t records = 0;           // accepted
  std::size_t rejected_records = 0;  // malformed or invalid lines
  std::size_t orphan_replies = 0;    // parent_id not present; linkage dropped
  std::vector<std::string> diagnostics;
};

struct Article {
  Minutes published_at = 0;
  /// Indices into CorpusStore::comments(), ascending by (created_at, comment_id).
  std::vector<std::size_t> comments;

  friend bool operator==(const Article&, const Article&) = default;
};

/// Immutable, canonically ordered collection of comments grouped by article.
/// Comments are sorted by (created_at, comment_id); comment indices used
/// throughout the library refer to that order.
class CorpusStore {
 public:
  CorpusStore() = default;

  /// Validates and canonicalizes. Records whose created_at precedes their
  /// article's publication or whose parent belongs to another article are
  /// dropped with a diagnostic; a duplicate comment_id is fatal.
  static CorpusStore build(std::vector<CommentRecord> records, SourceManifest manifest = {}) {
    std::sort(records.begin(), records.end(), [](const CommentRecord& a, const CommentRecord& b) {
      return std::tie(a.created_at, a.comment_id) < std::tie(b.created_at, b.comment_id);
    });
    std::unordered_map<std::string_view, const CommentRecord*> by_id;
    by_id.reserve(records.size());
    for (const auto& r : records) {
      if (!by_id.emplace(r.comment_id, &r).second) {
        throw Error("duplicate comment_id: " + r.comment_id);
      }
    }

    std::vector<bool> keep(records.size(), true);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.created_at < r.article_published_at) {
        keep[i] = false;
        manifest.diagnostics.push_back("comment " + r.comment_id +
                                       " created before its article was published");
      } else if (r.parent_id) {
        auto it = by_id.find(*r.parent_id);
        if (it != by_id.end() && it->second->article_id != r.article_id) {
          keep[i] = false;
          manifest.diagnostics.push_back("comment " + r.comment_id +
                                         " replies to a comment of another article");
        }
      }
    }

    CorpusStore store;
    store.comments_.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (keep[i]) store.comments_.push_back(std::move(records[i]));
      else ++manifest.rejected_records;
    }
    if (store.comments_.empty()) throw Error("zero valid records");

    store.index_.reserve(store.comments_.size());
    for (std::size_t i = 0; i < store.comments_.size(); ++i) {
      store.index_.emplace(store.comments_[i].comment_id, i);
    }
    store.reply_counts_.assign(store.comments_.size(), 0);
    for (auto& c : store.comments_) {
      if (!c.parent_id) continue;
      auto it = store.index_.find(*c.parent_id);
      if (it == store.index_.end()) {
        ++manifest.orphan_replies;
        manifest.diagnostics.push_back("comment " + c.comment_id + " has unknown parent " +
                                       *c.parent_id + "; reply linkage dropped");
        c.parent_id.reset();
      } else {
        ++store.reply_counts_[it->second];
      }
    }
    for (std::size_t i = 0; i < store.comments_.size(); ++i) {
      const auto& c = store.comments_[i];
      auto [it, inserted] = store.articles_.try_emplace(c.article_id);
      if (inserted || c.article_published_at < it->second.published_at) {
        it->second.published_at = c.article_published_at;
      }
      it->second.comments.push_back(i);
    }
    manifest.records = store.comments_.size();
    store.manifest_ = std::move(manifest);
    return store;
  }

  std::span<const CommentRecord> comments() const { return comments_; }
  const CommentRecord& comment(std::size_t i) const { return comments_.at(i); }
  std::size_t size() const { return comments_.size(); }

  std::optional<std::size_t> find(std::string_view comment_id) const {
    auto it = index_.find(std::string(comment_id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, Article, std::less<>>& articles() const { return articles_; }

  const Article& article(std::string_view id) const {
    auto it = articles_.find(id);
    if (it == articles_.end()) throw NotFoundError("unknown article: " + std::string(id));
    return it->second;
  }

  /// Number of comments whose parent_id is this comment.
  std::size_t reply_count(std::size_t i) const { return reply_counts_.at(i); }

  const SourceManifest& manifest() const { return manifest_; }

  /// Equality of content; the ingestion manifest is not compared.
  friend bool operator==(const CorpusStore& a, const CorpusStore& b) {
    return a.comments_ == b.comments_ && a.articles_ == b.articles_;
  }

 private:
  std::vector<CommentRecord> comments_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, Article, std::less<>> articles_;
  std::vector<std::size_t> reply_counts_;
  SourceManifest manifest_;
};

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::json to_json(const CommentRecord& r) {
  return nlohmann::json{
      {"comment_id", r.comment_id},
      {"article_id", r.article_id},
      {"user_key", r.user_key},
      {"created_at", format_rfc3339(r.created_at)},
      {"article_published_at", format_rfc3339(r.article_published_at)},
      {"text", r.text},
      {"respect_count", r.respect_count},
      {"parent_id", r.parent_id ? nlohmann::json(*r.parent_id) : nlohmann::json(nullptr)},
      {"status", to_string(r.status)},
  };
}

/// Parses one JSONL object. Throws Error describing the first problem.
inline CommentRecord parse_comment(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("record is not a JSON object");
  auto str = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw Error(std::string("missing string field ") + key);
    return it->get<std::string>();
  };
  auto time = [&](const char* key) {
    auto t = parse_rfc3339(str(key));
    if (!t) throw Error(std::string("malformed timestamp in ") + key);
    return *t;
  };
  CommentRecord r;
  r.comment_id = str("comment_id");
  r.article_id = str("article_id");
  r.user_key = str("user_key");
  r.created_at = time("created_at");
  r.article_published_at = time("article_published_at");
  r.text = str("text");
  auto likes = j.find("respect_count");
  if (likes == j.end() || !likes->is_number_integer() || likes->get<std::int64_t>() < 0) {
    throw Error("respect_count must be a non-negative integer");
  }
  r.respect_count = likes->get<std::int64_t>();
  if (auto p = j.find("parent_id"); p != j.end() && !p->is_null()) {
    if (!p->is_string()) throw Error("parent_id must be a string or null");
    r.parent_id = p->get<std::string>();
  }
  auto status = parse_status(str("status"));
  if (!status) throw Error("status must be rejected, published or featured");
  r.status = *status;
  if (r.comment_id.empty() || r.article_id.empty()) throw Error("empty identifier");
  return r;
}

/// Reads comment JSONL. Malformed lines are counted in the manifest and
/// reported through warn(); they are fatal only when nothing parses.
inline CorpusStore ingest_comments(std::istream& in, std::string source_name = "<stream>") {
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  SourceManifest manifest;
  manifest.files.push_back(source_name);
  manifest.file_digests.push_back(sha256_hex(content));

  std::vector<CommentRecord> records;
  std::istringstream lines(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(parse_comment(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      ++manifest.rejected_records;
      manifest.diagnostics.push_back(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records.empty()) throw Error("zero valid records in " + source_name);
  for (const auto& d : manifest.diagnostics) warn(d);
  const std::size_t before = manifest.diagnostics.size();
  auto store = CorpusStore::build(std::move(records), std::move(manifest));
  for (std::size_t i = before; i < store.manifest().diagnostics.size(); ++i) {
    warn(store.manifest().diagnostics[i]);
  }
  return store;
}

inline CorpusStore ingest_comments(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read comment file: " + path);
  return ingest_comments(in, path);
}

/// Canonical export: one object per line in corpus order.
inline void write_jsonl(const CorpusStore& corpus, std::ostream& out) {
  for (const auto& c : corpus.comments()) out << to_json(c).dump() << '\n';
}

inline void write_jsonl(const CorpusStore& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  write_jsonl(corpus, out);
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  double chrono_fraction = 0.5;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  double downsample_ratio = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    auto open_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!open_unit(chrono_fraction) || !open_unit(train_fraction) ||
        !open_unit(validation_fraction) || !open_unit(test_fraction)) {
      throw Error("split fractions must lie in (0, 1)");
    }
    if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
      throw Error("train, validation and test fractions must sum to 1");
    }
    if (!(downsample_ratio > 0.0 && downsample_ratio <= 1.0)) {
      throw Error("downsample ratio must lie in (0, 1]");
    }
  }
};

/// Article ids in ascending publication order.
using ArticleSet = std::vector<std::string>;

/// Orders articles by (published_at, article_id) and gives the first
/// ceil(fraction * N) to the first set.
inline std::pair<ArticleSet, ArticleSet> chronological_split(const CorpusStore& corpus,
                                                             double chrono_fraction) {
  if (corpus.articles().empty()) throw Error("corpus has no articles");
  std::vector<std::pair<Minutes, std::string>> order;
  order.reserve(corpus.articles().size());
  for (const auto& [id, a] : corpus.articles()) order.emplace_back(a.published_at, id);
  std::sort(order.begin(), order.end());
  const auto n = order.size();
  // Guard against 0.5 * 2952 landing a hair above an integer.
  const auto first = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(chrono_fraction * static_cast<double>(n) - 1e-9)));
  std::pair<ArticleSet, ArticleSet> sets;
  for (std::size_t i = 0; i < n; ++i) {
    (i < first ? sets.first : sets.second).push_back(std::move(order[i].second));
  }
  return sets;
}

inline std::pair<ArticleSet, ArticleSet> chronological_split(const CorpusStore& corpus,
                                                             const SplitSpec& spec) {
  spec.validate();
  return chronological_split(corpus, spec.chrono_fraction);
}

/// Rankable comments of an article: everything that was not rejected.
inline std::vector<std::size_t> candidate_comments(const CorpusStore& corpus,
                                                   std::string_view article_id) {
  std::vector<std::size_t> out;
  for (auto i : corpus.article(article_id).comments) {
    if (!corpus.comment(i).rejected()) out.push_back(i);
  }
  return out;
}

/// Rankable comments of a set of articles, in canonical corpus order.
inline std::vector<std::size_t> candidate_comments(const CorpusStore& corpus,
                                                   std::span<const std::string> articles) {
  std::vector<std::size_t> out;
  for (const auto& id : articles) {
    auto part = candidate_comments(corpus, id);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

/// Largest-remainder apportionment of `total` over `fractions`; remainder
/// ties go to the earlier bucket.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> fractions) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[i];
    remainders.emplace_back(-(exact - static_cast<double>(counts[i])), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[remainders[r].second];
  return counts;
}

}  // namespace detail

struct TrainValTest {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Comment-level split of the rankable comments of `articles`. Split sizes
/// are the largest-remainder apportionment of the total; featured comments
/// are apportioned separately so each split holds its proportional share
/// within one row. Each split is returned in canonical corpus order.
inline TrainValTest train_val_test_split(const CorpusStore& corpus,
                                         std::span<const std::string> articles,
                                         const SplitSpec& spec) {
  spec.validate();
  if (articles.empty()) throw Error("article set is empty");
  std::vector<std::size_t> featured, other;
  for (auto i : candidate_comments(corpus, articles)) {
    (corpus.comment(i).featured() ? featured : other).push_back(i);
  }
  if (featured.size() < 3) {
    throw Error("need at least 3 featured comments to stratify, found " +
                std::to_string(featured.size()));
  }
  const std::array fractions = {spec.train_fraction, spec.validation_fraction, spec.test_fraction};
  const auto totals = detail::apportion(featured.size() + other.size(), fractions);
  const auto featured_counts = detail::apportion(featured.size(), fractions);

  Rng rng(derive_seed(spec.seed, 0x7476));
  rng.shuffle(featured.begin(), featured.end());
  rng.shuffle(other.begin(), other.end());

  std::array<std::vector<std::size_t>, 3> parts;
  std::size_t f_pos = 0, o_pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    if (featured_counts[s] > totals[s]) throw Error("split too small for its featured share");
    const std::size_t other_count = totals[s] - featured_counts[s];
    parts[s].insert(parts[s].end(), featured.begin() + f_pos,
                    featured.begin() + f_pos + featured_counts[s]);
    parts[s].insert(parts[s].end(), other.begin() + o_pos, other.begin() + o_pos + other_count);
    f_pos += featured_counts[s];
    o_pos += other_count;
    std::sort(parts[s].begin(), parts[s].end());
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

/// Number of non-featured rows that makes `featured` rows exactly a `ratio`
/// share: floor(F * (1 - ratio) / ratio).
inline std::size_t downsample_target(std::size_t featured, double ratio) {
  const double exact = static_cast<double>(featured) * (1.0 - ratio) / ratio;
  return static_cast<std::size_t>(std::floor(exact + 1e-6));
}

/// Keeps every featured row and a uniform sample without replacement of
/// non-featured rows so featured rows make up `ratio` of the result. Output
/// preserves input order. Falls back to all non-featured rows (with a
/// warning) when too few exist.
template <class Row, class IsFeatured>
std::vector<Row> downsample(std::span<const Row> rows, double ratio, std::uint64_t seed,
                            IsFeatured is_featured) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("downsample ratio must lie in (0, 1]");
  std::vector<std::size_t> negatives;
  std::size_t featured = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (is_featured(rows[i])) ++featured;
    else negatives.push_back(i);
  }
  if (featured == 0) throw Error("cannot downsample: no featured rows");

  std::size_t target = downsample_target(featured, ratio);
  if (target > negatives.size()) {
    warn("downsample: requested " + std::to_string(target) + " non-featured rows but only " +
         std::to_string(negatives.size()) + " available; keeping all");
    target = negatives.size();
  }
  Rng rng(derive_seed(seed, 0x6473));
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(negatives.size() - i));
    std::swap(negatives[i], negatives[j]);
  }
  std::vector<bool> keep(rows.size(), false);
  for (std::size_t i = 0; i < rows.size(); ++i) keep[i] = is_featured(rows[i]);
  for (std::size_t i = 0; i < target; ++i) keep[negatives[i]] = true;

  std::vector<Row> out;
  out.reserve(featured + target);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (keep[i]) out.push_back(rows[i]);
  }
  return out;
}

/// Corpus overload: rows are comment indices; output is chronological.
inline std::vector<std::size_t> downsample(const CorpusStore& corpus,
                                           std::span<const std::size_t> train, double ratio,
                                           std::uint64_t seed) {
  std::vector<std::size_t> sorted(train.begin(), train.end());
  std::sort(sorted.begin(), sorted.end());
  return downsample<std::size_t>(std::span<const std::size_t>(sorted), ratio, seed,
                                 [&](std::size_t i) { return corpus.comment(i).featured(); });
}

}  // namespace modq
