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
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "modq/features.hpp"
#include "modq/synth.hpp"
#include "test_util.hpp"

namespace modq {
namespace {

using testing::make_comment;

constexpr Minutes kT0 = 26297280;

std::vector<std::size_t> all_rows(const CorpusStore& c) {
  std::vector<std::size_t> rows(c.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// ---------------------------------------------------------------------------
// User history

TEST(UserHistory, NoPriorPosts) {
  const auto corpus = CorpusStore::build({make_comment("c1", "a", "new", kT0 + 3, kT0)});
  const auto h = user_history_at("new", kT0 + 3, corpus);
  EXPECT_EQ(h.total_posts_user, 0u);
  EXPECT_EQ(h.featured_posts_user, 0u);
  EXPECT_EQ(h.ratio_featured, 0.0);
  EXPECT_EQ(h.ratio_rejected, 0.0);
  EXPECT_EQ(h.ratio_reply, 0.0);
  EXPECT_EQ(h.ratio_respect, 0.0);
  EXPECT_EQ(UserHistoryIndex(corpus).at("new", kT0 + 3), h);
}

TEST(UserHistory, Ratios) {
  std::vector<CommentRecord> records;
  for (int i = 0; i < 50; ++i) {
    const Status s = i < 2 ? Status::kFeatured : (i < 7 ? Status::kRejected : Status::kPublished);
    records.push_back(make_comment("c" + std::to_string(100 + i), "a", "u", kT0 + i, kT0, "x", 0, s));
  }
  records.push_back(make_comment("now", "a", "u", kT0 + 100, kT0));
  const auto corpus = CorpusStore::build(records);
  const auto h = user_history_at("u", kT0 + 100, corpus);
  EXPECT_EQ(h.total_posts_user, 50u);
  EXPECT_EQ(h.featured_posts_user, 2u);
  EXPECT_DOUBLE_EQ(h.ratio_featured, 0.04);
  EXPECT_DOUBLE_EQ(h.ratio_rejected, 0.10);
  EXPECT_EQ(UserHistoryIndex(corpus).at("u", kT0 + 100), h);
}

TEST(UserHistory, StrictlyEarlierPostsOnly) {
  const auto corpus = CorpusStore::build({
      make_comment("t1", "a", "u", kT0 + 1, kT0, "x", 4, Status::kFeatured),
      make_comment("t2", "a", "u", kT0 + 2, kT0, "x", 8),
      make_comment("t2b", "a", "v", kT0 + 2, kT0, "x", 8),
      make_comment("t3", "a", "u", kT0 + 3, kT0, "x", 16),
  });
  const auto h = user_history_at("u", kT0 + 2, corpus);
  EXPECT_EQ(h.total_posts_user, 1u);
  EXPECT_EQ(h.featured_posts_user, 1u);
  EXPECT_DOUBLE_EQ(h.ratio_respect, 4.0);
}

/// Brute-force filter written independently of the library scan.
UserHistory oracle_history(const CorpusStore& corpus, const std::string& user, Minutes t) {
  std::vector<const CommentRecord*> earlier;
  for (const auto& c : corpus.comments()) {
    if (c.user_key == user && c.created_at < t) earlier.push_back(&c);
  }
  UserHistory h;
  h.as_of = t;
  h.total_posts_user = earlier.size();
  if (earlier.empty()) return h;
  double featured = 0, rejected = 0, replies = 0, likes = 0;
  for (const auto* c : earlier) {
    featured += c->status == Status::kFeatured;
    rejected += c->status == Status::kRejected;
    likes += static_cast<double>(c->respect_count);
    for (const auto& other : corpus.comments()) {
      replies += other.parent_id && *other.parent_id == c->comment_id;
    }
  }
  const double n = static_cast<double>(earlier.size());
  h.featured_posts_user = static_cast<std::size_t>(featured);
  h.ratio_featured = featured / n;
  h.ratio_rejected = rejected / n;
  h.ratio_reply = replies / n;
  h.ratio_respect = likes / n;
  return h;
}

TEST(UserHistory, IndexMatchesBruteForce) {
  auto cfg = testing::small_synth(15);
  cfg.n_users = 30;
  const auto corpus = synth_generate(cfg, 21);
  const UserHistoryIndex index(corpus);
  for (std::size_t i = 0; i < corpus.size(); i += 3) {
    const auto& c = corpus.comment(i);
    const auto expected = oracle_history(corpus, c.user_key, c.created_at);
    const auto got = index.at(c.user_key, c.created_at);
    ASSERT_EQ(got.total_posts_user, expected.total_posts_user);
    ASSERT_EQ(got.featured_posts_user, expected.featured_posts_user);
    ASSERT_NEAR(got.ratio_featured, expected.ratio_featured, 1e-12);
    ASSERT_NEAR(got.ratio_rejected, expected.ratio_rejected, 1e-12);
    ASSERT_NEAR(got.ratio_reply, expected.ratio_reply, 1e-12);
    ASSERT_NEAR(got.ratio_respect, expected.ratio_respect, 1e-12);
    ASSERT_EQ(got, user_history_at(c.user_key, c.created_at, corpus));
  }
}

// ---------------------------------------------------------------------------
// Non-textual features

TEST(NonTextual, UptimeArithmetic) {
  const auto corpus = CorpusStore::build({make_comment("c", "a", "u", kT0 + 30, kT0, "tekst", 3)});
  const auto v = nontextual_features(0, corpus);
  EXPECT_EQ(v[kDeltaMinutes], 30.0);
  EXPECT_DOUBLE_EQ(v[kRespectUptime], 0.1);
  EXPECT_EQ(v[kReplyUptime], 0.0);
  EXPECT_EQ(v[kReplyCount], 0.0);
  EXPECT_EQ(v[kRespectCount], 3.0);
}

TEST(NonTextual, TextCounts) {
  const auto corpus =
      CorpusStore::build({make_comment("c", "a", "u", kT0 + 1, kT0, "Dit is een test. Echt waar!")});
  const auto v = nontextual_features(0, corpus);
  EXPECT_EQ(v[kWordcount], 6.0);
  EXPECT_EQ(v[kWordsPerSentence], 3.0);
}

TEST(NonTextual, SameMinuteIsClamped) {
  const auto corpus = CorpusStore::build({
      make_comment("c", "a", "u", kT0, kT0, "x", 5),
      make_comment("r", "a", "v", kT0 + 1, kT0, "x", 0, Status::kPublished, "c"),
  });
  const auto v = nontextual_features(0, corpus);
  EXPECT_EQ(v[kDeltaMinutes], 1.0);
  EXPECT_EQ(v[kRespectUptime], 5.0);
  EXPECT_EQ(v[kReplyUptime], 1.0);
  for (double x : v) EXPECT_TRUE(std::isfinite(x));
}

TEST(NonTextual, OwnStatusNeverLeaks) {
  const auto base = synth_generate(testing::small_synth(10), 8);
  std::vector<CommentRecord> records(base.comments().begin(), base.comments().end());
  for (std::size_t i = 0; i < records.size(); i += 17) {
    auto flipped = records;
    flipped[i].status = flipped[i].featured() ? Status::kPublished : Status::kFeatured;
    const auto other = CorpusStore::build(flipped);
    EXPECT_EQ(nontextual_features(i, base), nontextual_features(i, other));
  }
}

TEST(NonTextual, IndexedAndLinearAgree) {
  const auto corpus = synth_generate(testing::small_synth(10), 6);
  const UserHistoryIndex index(corpus);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ASSERT_EQ(nontextual_features(i, corpus, index), nontextual_features(i, corpus));
  }
}

// ---------------------------------------------------------------------------
// Bag of words

TEST(Vocabulary, StopwordsExcluded) {
  const std::vector<std::string> texts = {"de kat", "de hond"};
  testing::QuietWarnings quiet;
  const auto vocab = build_vocabulary(texts, 10, text::StopwordSet{"de"});
  EXPECT_EQ(vocab.tokens(), (std::vector<std::string>{"hond", "kat"}));
  EXPECT_EQ(vocab.doc_freq(), (std::vector<std::size_t>{1, 1}));
}

TEST(Vocabulary, DocumentFrequencyOrder) {
  testing::QuietWarnings quiet;
  const std::vector<std::string> texts = {"b a a a", "b c", "b c", "d"};
  const auto vocab = build_vocabulary(texts, 3, text::StopwordSet{});
  EXPECT_EQ(vocab.tokens(), (std::vector<std::string>{"b", "c", "a"}));
  EXPECT_EQ(vocab.index_of("c"), 1u);
  EXPECT_FALSE(vocab.index_of("d"));
}

TEST(Vocabulary, DeterministicRebuild) {
  const auto corpus = synth_generate(testing::small_synth(20), 3);
  const auto rows = all_rows(corpus);
  testing::QuietWarnings quiet;
  EXPECT_TRUE(build_vocabulary(corpus, rows, 50, text::default_dutch_stopwords()) ==
              build_vocabulary(corpus, rows, 50, text::default_dutch_stopwords()));
}

TEST(Vocabulary, Errors) {
  const std::vector<std::string> empty = {"", "  "};
  EXPECT_THROW(build_vocabulary(empty, 10, text::StopwordSet{}), Error);
  const std::vector<std::string> texts = {"a"};
  EXPECT_THROW(build_vocabulary(texts, 0, text::StopwordSet{}), Error);
}

TEST(BagOfWords, Counts) {
  const Vocabulary vocab({"hond", "kat"}, {1, 1}, {});
  EXPECT_EQ(bow_vector("", vocab), (std::vector<double>{0, 0}));
  EXPECT_EQ(bow_vector("kat kat hond", vocab), (std::vector<double>{1, 2}));
  EXPECT_EQ(bow_vector("Kat! KAT, hondje", vocab), (std::vector<double>{0, 2}));
}

TEST(BagOfWords, MatchesNaiveRecount) {
  const std::vector<std::string> words = {"kat", "Hond", "muis.", "de", "vis!", "boom", "huis"};
  Rng rng(12);
  std::vector<std::string> texts;
  for (int t = 0; t < 200; ++t) {
    std::string s;
    const auto n = rng.below(30);
    for (std::uint64_t w = 0; w < n; ++w) s += words[rng.below(words.size())] + " ";
    texts.push_back(s);
  }
  testing::QuietWarnings quiet;
  const auto vocab = build_vocabulary(texts, 4, text::StopwordSet{"de"});
  for (const auto& t : texts) {
    // Naive recount: strip the only punctuation used, lowercase ASCII.
    std::map<std::string, double> counts;
    std::istringstream in(t);
    std::string w;
    while (in >> w) {
      std::string clean;
      for (char ch : w) {
        if (ch != '.' && ch != '!') clean.push_back(static_cast<char>(std::tolower(ch)));
      }
      counts[clean] += 1;
    }
    const auto v = bow_vector(t, vocab);
    for (std::size_t k = 0; k < vocab.size(); ++k) ASSERT_EQ(v[k], counts[vocab.tokens()[k]]) << t;
  }
}

// ---------------------------------------------------------------------------
// Schema, featurizer, embeddings

/// Corpus whose texts carry at least `distinct` different tokens.
CorpusStore wide_corpus(std::size_t distinct) {
  std::vector<CommentRecord> records;
  for (std::size_t i = 0; i < distinct; ++i) {
    records.push_back(make_comment("c" + std::to_string(10000 + i), "a" + std::to_string(i % 5),
                                   "u" + std::to_string(i % 9), kT0 + static_cast<Minutes>(i), kT0,
                                   "woord" + std::to_string(i) + " gedeeld de"));
  }
  return CorpusStore::build(records);
}

EmbeddingTable random_embeddings(const CorpusStore& corpus, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingTable table;
  for (const auto& c : corpus.comments()) {
    std::vector<double> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    table.insert(c.comment_id, std::move(v));
  }
  return table;
}

TEST(Schema, RowLengths) {
  const auto corpus = wide_corpus(500);
  const auto rows = all_rows(corpus);
  FeatureSpec base;
  EXPECT_EQ(Featurizer(corpus, base).row(0).size(), 13u);

  FeatureSpec bow;
  bow.use_bow = true;
  bow.vocab = build_vocabulary(corpus, rows, kDefaultVocabularySize, text::default_dutch_stopwords());
  EXPECT_EQ(bow.schema().size(), 426u);
  EXPECT_EQ(Featurizer(corpus, bow).row(0).size(), 426u);

  const auto table = random_embeddings(corpus, 784, 1);
  FeatureSpec emb;
  emb.use_embeddings = true;
  emb.embedding_dim = 784;
  EXPECT_EQ(Featurizer(corpus, emb, &table).row(0).size(), 797u);
  EXPECT_EQ(emb.schema().names.back(), "emb:783");
  EXPECT_EQ(bow.schema().names[13].rfind("bow:", 0), 0u);
  EXPECT_NE(bow.schema().id(), base.schema().id());
}

TEST(Featurizer, EmbeddingErrors) {
  const auto corpus = wide_corpus(20);
  FeatureSpec emb;
  emb.use_embeddings = true;
  emb.embedding_dim = 8;
  EXPECT_THROW(Featurizer(corpus, emb), SchemaMismatchError);
  const auto wrong_dim = random_embeddings(corpus, 4, 1);
  EXPECT_THROW(Featurizer(corpus, emb, &wrong_dim), SchemaMismatchError);

  EmbeddingTable partial;
  partial.insert(corpus.comment(0).comment_id, std::vector<double>(8, 1.0));
  const Featurizer f(corpus, emb, &partial);
  EXPECT_NO_THROW(f.row(0));
  try {
    f.row(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(corpus.comment(1).comment_id), std::string::npos);
  }
  std::vector<double> short_buf(3);
  EXPECT_THROW(f.fill(0, short_buf), SchemaMismatchError);
}

TEST(Featurizer, PureAndTrainInferenceConsistent) {
  const auto corpus = synth_generate(testing::small_synth(15), 13);
  const auto rows = all_rows(corpus);
  testing::QuietWarnings quiet;
  FeatureSpec spec;
  spec.use_bow = true;
  spec.vocab = build_vocabulary(corpus, rows, 40, text::default_dutch_stopwords());
  const auto table = random_embeddings(corpus, 6, 2);
  spec.use_embeddings = true;
  spec.embedding_dim = 6;
  const Featurizer f(corpus, spec, &table);
  const auto matrix = assemble_matrix(rows, f);
  matrix.validate();
  const Featurizer again(corpus, spec, &table);
  for (auto i : rows) {
    const auto r = f.row(i);
    ASSERT_EQ(r, f.row(i));
    ASSERT_EQ(r, again.row(i));
    ASSERT_TRUE(std::equal(r.begin(), r.end(), matrix.row(i).begin()));
    ASSERT_EQ(matrix.labels[i], corpus.comment(i).featured() ? 1 : 0);
  }
  EXPECT_EQ(matrix.digest(), assemble_matrix(rows, again).digest());
  EXPECT_EQ(matrix.digest().size(), 64u);
}

TEST(Embeddings, BinaryAndJsonlRoundTrip) {
  const auto corpus = wide_corpus(30);
  const auto table = random_embeddings(corpus, 5, 3);  // float-representable values
  std::stringstream bin, jsonl;
  write_embeddings_binary(table, bin);
  write_embeddings_jsonl(table, jsonl);
  const auto from_bin = load_embeddings(bin);
  const auto from_jsonl = load_embeddings(jsonl);
  EXPECT_EQ(from_bin.dim, 5u);
  EXPECT_EQ(from_bin.vectors, table.vectors);
  EXPECT_EQ(from_jsonl.vectors, table.vectors);
}

TEST(Embeddings, BinaryLayout) {
  EmbeddingTable t;
  t.insert("ab", {1.0, -2.0});
  std::stringstream out;
  write_embeddings_binary(t, out);
  const std::string bytes = out.str();
  const std::string expected("MODQEMB1"
                             "\x02\x00\x00\x00"
                             "\x01\x00\x00\x00\x00\x00\x00\x00"
                             "\x02\x00\x00\x00"
                             "ab"
                             "\x00\x00\x80\x3f"
                             "\x00\x00\x00\xc0",
                             8 + 4 + 8 + 4 + 2 + 8);
  EXPECT_EQ(bytes, expected);
}

TEST(Embeddings, Validation) {
  EmbeddingTable t;
  t.insert("a", {1.0, 2.0});
  EXPECT_THROW(t.insert("b", {1.0}), Error);
  EXPECT_THROW(t.insert("a", {1.0, 2.0}), Error);
  EXPECT_THROW(t.insert("c", {}), Error);
  EXPECT_THROW(t.insert("d", {1.0, NAN}), Error);

  std::stringstream ragged("{\"comment_id\":\"a\",\"vector\":[1,2]}\n{\"comment_id\":\"b\",\"vector\":[1]}\n");
  EXPECT_THROW(load_embeddings(ragged), Error);
  std::stringstream truncated(std::string("MODQEMB1\x02\x00\x00\x00", 12));
  EXPECT_THROW(load_embeddings(truncated), Error);
  std::stringstream empty("");
  EXPECT_THROW(load_embeddings(empty), Error);
}

}  // namespace
}  // namespace modq
