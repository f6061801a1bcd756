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

// Text handling for featurization: UTF-8 decoding, a compact table of the
// Unicode punctuation (P*) category, simple case folding for Latin, Greek and
// Cyrillic scripts, and the tokenization rules used by the word-count and
// bag-of-words features.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modq/common.hpp"

namespace modq::text {

/// Decodes UTF-8; invalid sequences become U+FFFD.
inline std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

namespace detail {

struct Range {
  char32_t lo, hi;
};

// Unicode general category P* for the BMP blocks that occur in European news
// comments. ASCII symbols such as '$', '+', '<' are category S* and excluded.
inline constexpr std::array kPunctuationRanges = {
    Range{0x21, 0x23},     Range{0x25, 0x2A},     Range{0x2C, 0x2F},     Range{0x3A, 0x3B},
    Range{0x3F, 0x40},     Range{0x5B, 0x5D},     Range{0x5F, 0x5F},     Range{0x7B, 0x7B},
    Range{0x7D, 0x7D},     Range{0xA1, 0xA1},     Range{0xA7, 0xA7},     Range{0xAB, 0xAB},
    Range{0xB6, 0xB7},     Range{0xBB, 0xBB},     Range{0xBF, 0xBF},     Range{0x37E, 0x37E},
    Range{0x387, 0x387},   Range{0x55A, 0x55F},   Range{0x589, 0x58A},   Range{0x5BE, 0x5BE},
    Range{0x5C0, 0x5C0},   Range{0x5C3, 0x5C3},   Range{0x5C6, 0x5C6},   Range{0x5F3, 0x5F4},
    Range{0x60C, 0x60D},   Range{0x61B, 0x61B},   Range{0x61E, 0x61F},   Range{0x66A, 0x66D},
    Range{0x6D4, 0x6D4},   Range{0x2010, 0x2027}, Range{0x2030, 0x2043}, Range{0x2045, 0x2051},
    Range{0x2053, 0x205E}, Range{0x207D, 0x207E}, Range{0x208D, 0x208E}, Range{0x2308, 0x230B},
    Range{0x2329, 0x232A}, Range{0x2768, 0x2775}, Range{0x27C5, 0x27C6}, Range{0x27E6, 0x27EF},
    Range{0x2983, 0x2998}, Range{0x29D8, 0x29DB}, Range{0x29FC, 0x29FD}, Range{0x2CF9, 0x2CFC},
    Range{0x2CFE, 0x2CFF}, Range{0x2E00, 0x2E2E}, Range{0x2E30, 0x2E4F}, Range{0x3001, 0x3003},
    Range{0x3008, 0x3011}, Range{0x3014, 0x301F}, Range{0x3030, 0x3030}, Range{0x303D, 0x303D},
    Range{0x30A0, 0x30A0}, Range{0x30FB, 0x30FB}, Range{0xFE10, 0xFE19}, Range{0xFE30, 0xFE52},
    Range{0xFE54, 0xFE61}, Range{0xFE63, 0xFE63}, Range{0xFE68, 0xFE68}, Range{0xFE6A, 0xFE6B},
    Range{0xFF01, 0xFF03}, Range{0xFF05, 0xFF0A}, Range{0xFF0C, 0xFF0F}, Range{0xFF1A, 0xFF1B},
    Range{0xFF1F, 0xFF20}, Range{0xFF3B, 0xFF3D}, Range{0xFF3F, 0xFF3F}, Range{0xFF5B, 0xFF5B},
    Range{0xFF5D, 0xFF5D}, Range{0xFF5F, 0xFF65},
};

}  // namespace detail

inline bool is_punctuation(char32_t cp) {
  const auto& table = detail::kPunctuationRanges;
  auto it = std::upper_bound(table.begin(), table.end(), cp,
                             [](char32_t c, const detail::Range& r) { return c < r.lo; });
  return it != table.begin() && cp <= std::prev(it)->hi;
}

inline bool is_space(char32_t cp) {
  return cp == 0x20 || (cp >= 0x09 && cp <= 0x0D) || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
         cp == 0x205F || cp == 0x3000;
}

inline char32_t to_lower(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return U'i';
    if (cp == 0x178) return 0xFF;
    const bool even_upper = (cp <= 0x137) || (cp >= 0x14A && cp <= 0x177);
    const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
    if ((even_upper && cp % 2 == 0) || (odd_upper && cp % 2 == 1)) return cp + 1;
    return cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

/// Number of whitespace-separated tokens in the raw text.
inline std::size_t word_count(std::string_view s) {
  std::size_t count = 0;
  bool in_word = false;
  for (char32_t cp : decode_utf8(s)) {
    if (is_space(cp)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

/// Sentences are the non-blank segments between '.', '!' and '?'. At least 1.
inline std::size_t sentence_count(std::string_view s) {
  std::size_t count = 0;
  bool has_content = false;
  for (char32_t cp : decode_utf8(s)) {
    if (cp == U'.' || cp == U'!' || cp == U'?') {
      if (has_content) ++count;
      has_content = false;
    } else if (!is_space(cp)) {
      has_content = true;
    }
  }
  if (has_content) ++count;
  return std::max<std::size_t>(count, 1);
}

/// Lowercases, removes punctuation characters, splits on whitespace. Tokens
/// that consisted only of punctuation vanish.
inline std::vector<std::string> normalized_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  std::string current;
  for (char32_t cp : decode_utf8(s)) {
    if (is_space(cp)) {
      if (!current.empty()) tokens.push_back(std::exchange(current, {}));
    } else if (!is_punctuation(cp)) {
      append_utf8(current, to_lower(cp));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

using StopwordSet = std::set<std::string, std::less<>>;

/// Default Dutch stopword list (the common NLTK list).
inline const StopwordSet& default_dutch_stopwords() {
  static const StopwordSet words = {
      "aan",    "al",     "alles",  "als",    "altijd", "andere",  "ben",    "bij",   "daar",
      "dan",    "dat",    "de",     "der",    "deze",   "die",     "dit",    "doch",  "doen",
      "door",   "dus",    "een",    "eens",   "en",     "er",      "ge",     "geen",  "geweest",
      "haar",   "had",    "heb",    "hebben", "heeft",  "hem",     "het",    "hier",  "hij",
      "hoe",    "hun",    "iemand", "iets",   "ik",     "in",      "is",     "ja",    "je",
      "kan",    "kon",    "kunnen", "maar",   "me",     "meer",    "men",    "met",   "mij",
      "mijn",   "moet",   "na",     "naar",   "niet",   "niets",   "nog",    "nu",    "of",
      "om",     "omdat",  "onder",  "ons",    "ook",    "op",      "over",   "reeds", "te",
      "tegen",  "toch",   "toen",   "tot",    "u",      "uit",     "uw",     "van",   "veel",
      "voor",   "want",   "waren",  "was",    "wat",    "werd",    "wezen",  "wie",   "wil",
      "worden", "wordt",  "zal",    "ze",     "zelf",   "zich",    "zij",    "zijn",  "zo",
      "zonder", "zou",
  };
  return words;
}

/// One token per line, UTF-8. Blank lines and lines starting with '#' are
/// skipped; tokens are normalized the same way as comment text.
inline StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read stopword file: " + path);
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (auto& token : normalized_tokens(line)) words.insert(std::move(token));
  }
  return words;
}

}  // namespace modq::text
