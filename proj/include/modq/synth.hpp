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

// Synthetic comment corpora with a planted featuring signal.
//
// Each user has a latent quality q in [0, 1]. Quality shifts the comment
// length, the share of "constructive" tokens in the text, the like count and
// how often a comment attracts replies. Per article a geometric number of
// comments (mean ~2.8, median 2) is featured: the top ones by a noisy score of
// quality, standardized word count and standardized likes. With all signal
// weights at zero the score is pure noise and labels are independent of every
// observable feature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "modq/common.hpp"
#include "modq/corpus.hpp"
#include "modq/text.hpp"
#include "modq/time.hpp"

namespace modq {

struct SynthConfig {
  std::size_t n_articles = 200;
  double mean_comments = 50.0;
  double comments_sigma = 0.8;  // log-normal spread of comments per article
  std::size_t n_users = 1000;
  double featured_mean = 2.8;

  // Planted signal strengths.
  double quality_signal = 1.0;  // weight of latent quality in the featuring score
  double length_signal = 1.0;   // quality -> word count, and word count weight
  double likes_signal = 1.0;    // quality -> likes, and likes weight
  double text_signal = 1.0;     // quality -> constructive token share
  double noise = 0.15;          // sd of the score noise

  double rejection_rate = 0.05;
  double reply_rate = 0.3;
  Minutes start = 26297280;  // 2020-01-01T00:00Z
  double article_spacing_minutes = 180.0;
  double mean_delay_minutes = 240.0;

  void validate() const {
    if (n_articles == 0) throw Error("synthetic config: n_articles must be positive");
    if (n_users == 0) throw Error("synthetic config: n_users must be positive");
    if (!(mean_comments >= 1.0)) throw Error("synthetic config: mean_comments must be >= 1");
    if (featured_mean < 0.0 || noise < 0.0) throw Error("synthetic config: negative parameter");
    if (rejection_rate < 0.0 || rejection_rate > 0.5 || reply_rate < 0.0 || reply_rate > 1.0) {
      throw Error("synthetic config: rate out of range");
    }
  }
};

namespace synth_detail {

inline constexpr std::array<std::string_view, 40> kConstructive = {
    "onderzoek",  "argument",    "bron",       "gegevens",    "echter",      "bijvoorbeeld",
    "beleid",     "oplossing",   "kosten",     "economie",    "klimaat",     "wetenschap",
    "analyse",    "verkiezingen", "gezondheid", "maatregelen", "overheid",    "statistiek",
    "verantwoordelijkheid", "samenleving", "perspectief", "nuance", "rapport", "cijfers",
    "investering", "toekomst",   "risico",     "context",     "discussie",   "voorstel",
    "conclusie",  "feiten",      "gevolgen",   "maatschappij", "democratie", "vaccin",
    "ziekenhuis", "energie",     "uitstoot",   "begroting",
};

inline constexpr std::array<std::string_view, 30> kFiller = {
    "lol",   "haha",     "gewoon", "echt",   "zeker",  "jammer",   "slecht",  "prima",
    "weer",  "onzin",    "typisch", "boeiend", "super", "nou",     "tja",     "hè",
    "leuk",  "stom",     "ok",     "top",    "pff",    "ach",      "nee",     "waarom",
    "eindelijk", "helaas", "geweldig", "triest", "snap", "klopt",
};

inline constexpr std::array<std::string_view, 16> kStopwords = {
    "de", "het", "een", "en", "van", "dat", "die", "is",
    "niet", "op", "maar", "ook", "dan", "ze", "er", "wat",
};

inline std::string make_id(char prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, n);
  return buf;
}

inline std::string make_text(Rng& rng, double quality, const SynthConfig& cfg) {
  const double mean_len = 18.0 * std::exp(cfg.length_signal * (quality - 0.5) * 1.6);
  const std::size_t words = 1 + static_cast<std::size_t>(rng.poisson(mean_len));
  const double constructive = std::clamp(0.5 + cfg.text_signal * (quality - 0.5) * 0.9, 0.05, 0.95);
  std::string out;
  bool sentence_start = true;
  for (std::size_t w = 0; w < words; ++w) {
    std::string_view token;
    if (rng.bernoulli(0.3)) {
      token = kStopwords[rng.below(kStopwords.size())];
    } else if (rng.bernoulli(constructive)) {
      token = kConstructive[rng.below(kConstructive.size())];
    } else {
      token = kFiller[rng.below(kFiller.size())];
    }
    if (!out.empty()) out.push_back(' ');
    std::string word(token);
    if (sentence_start && word[0] >= 'a' && word[0] <= 'z') word[0] = static_cast<char>(word[0] - 32);
    out += word;
    sentence_start = false;
    if (w + 1 == words || rng.bernoulli(1.0 / 8.0)) {
      static constexpr char kEnd[] = {'.', '.', '.', '!', '?'};
      out.push_back(kEnd[rng.below(5)]);
      sentence_start = true;
    } else if (rng.bernoulli(0.05)) {
      out.push_back(',');
    }
  }
  return out;
}

/// Values standardized to zero mean, unit variance; all zero when constant.
inline std::vector<double> standardized(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  std::vector<double> out(v.size(), 0.0);
  if (sd > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
  }
  return out;
}

}  // namespace synth_detail

/// Generates a corpus; fully determined by (config, seed).
inline CorpusStore synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  using namespace synth_detail;
  cfg.validate();
  Rng rng(derive_seed(seed, 0x73796e));

  std::vector<double> quality(cfg.n_users);
  std::vector<double> cumulative_activity(cfg.n_users);
  double activity_total = 0.0;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    quality[u] = rng.uniform();
    activity_total += std::exp(rng.normal());
    cumulative_activity[u] = activity_total;
  }
  auto draw_user = [&]() {
    const double x = rng.uniform() * activity_total;
    auto it = std::upper_bound(cumulative_activity.begin(), cumulative_activity.end(), x);
    return static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(it - cumulative_activity.begin(),
                                 static_cast<std::ptrdiff_t>(cfg.n_users) - 1));
  };

  const double mu = std::log(cfg.mean_comments) - 0.5 * cfg.comments_sigma * cfg.comments_sigma;
  const double cap = 20.0 * cfg.mean_comments;
  const double geometric_p = 1.0 / (1.0 + cfg.featured_mean);

  std::vector<CommentRecord> records;
  std::size_t next_comment = 0;
  for (std::size_t a = 0; a < cfg.n_articles; ++a) {
    const std::string article_id = make_id('a', a, 5);
    const Minutes published = cfg.start +
                              static_cast<Minutes>(std::floor(
                                  static_cast<double>(a) * cfg.article_spacing_minutes)) +
                              static_cast<Minutes>(rng.below(60));
    const double raw = std::exp(mu + cfg.comments_sigma * rng.normal());
    const auto n = static_cast<std::size_t>(std::clamp(std::round(raw), 3.0, cap));

    struct Draft {
      std::size_t user;
      Minutes delay;
    };
    std::vector<Draft> drafts(n);
    for (auto& d : drafts) {
      d.user = draw_user();
      d.delay = static_cast<Minutes>(std::floor(rng.exponential(cfg.mean_delay_minutes)));
    }
    std::stable_sort(drafts.begin(), drafts.end(),
                     [](const Draft& x, const Draft& y) { return x.delay < y.delay; });

    std::vector<std::size_t> visible;  // indices into records of non-rejected comments
    std::vector<double> visible_quality;
    std::vector<double> visible_weight;
    for (const auto& d : drafts) {
      const double q = quality[d.user];
      CommentRecord r;
      r.comment_id = make_id('c', next_comment++, 7);
      r.article_id = article_id;
      r.user_key = make_id('u', d.user, 5);
      r.article_published_at = published;
      r.created_at = published + d.delay;
      r.text = make_text(rng, q, cfg);
      const double recency = 0.5 + std::exp(-static_cast<double>(d.delay) / 300.0);
      r.respect_count = static_cast<std::int64_t>(
          rng.poisson(4.0 * recency * std::exp(cfg.likes_signal * (q - 0.5) * 2.5)));
      if (!visible.empty() && rng.bernoulli(cfg.reply_rate)) {
        const double total = std::accumulate(visible_weight.begin(), visible_weight.end(), 0.0);
        double x = rng.uniform() * total;
        std::size_t pick = 0;
        while (pick + 1 < visible.size() && x >= visible_weight[pick]) x -= visible_weight[pick++];
        r.parent_id = records[visible[pick]].comment_id;
      }
      r.status = rng.bernoulli(cfg.rejection_rate * 2.0 * (1.0 - q)) ? Status::kRejected
                                                                      : Status::kPublished;
      if (!r.rejected()) {
        visible.push_back(records.size());
        visible_weight.push_back(0.5 + q);
        visible_quality.push_back(q);
      }
      records.push_back(std::move(r));
    }

    // Featuring: top-m visible comments by noisy score.
    std::vector<double> words, likes;
    for (auto i : visible) {
      words.push_back(std::log1p(static_cast<double>(text::word_count(records[i].text))));
      likes.push_back(std::log1p(static_cast<double>(records[i].respect_count)));
    }
    const auto z_words = standardized(words);
    const auto z_likes = standardized(likes);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t v = 0; v < visible.size(); ++v) {
      const std::size_t i = visible[v];
      const double q = visible_quality[v];
      const double score = cfg.quality_signal * q + cfg.length_signal * 0.25 * z_words[v] +
                           cfg.likes_signal * 0.25 * z_likes[v] + cfg.noise * rng.normal();
      scored.emplace_back(-score, i);
    }
    const auto m = static_cast<std::size_t>(
        std::floor(std::log1p(-rng.uniform()) / std::log1p(-geometric_p)));
    std::sort(scored.begin(), scored.end());
    for (std::size_t r = 0; r < std::min(m, scored.size()); ++r) {
      records[scored[r].second].status = Status::kFeatured;
    }
  }
  return CorpusStore::build(std::move(records));
}

}  // namespace modq
