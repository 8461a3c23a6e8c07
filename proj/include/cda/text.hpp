// SPDX-License-Identifier: Apache-2.0
/**
 * @file   text.hpp
 * @brief  Character filtering, sentence splitting, tokenization, vocabulary
 *         and the Document type.
 */
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cda {

inline constexpr std::int32_t kUnkId = 0;
inline constexpr std::int32_t kPadId = 1;
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kPadToken = "<pad>";

namespace detail {

// Decodes one UTF-8 code point starting at s[i]; advances i. Invalid bytes
// decode to U+FFFD and consume one byte.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

// Letters from the common alphabetic blocks, and general punctuation.
inline bool keep_non_ascii(char32_t cp) {
  if (cp >= 0x00C0 && cp <= 0x024F) return cp != 0x00D7 && cp != 0x00F7;
  if (cp >= 0x00A1 && cp <= 0x00BF) {
    // Latin-1 punctuation marks only; currency and other symbols go.
    return cp == 0x00A1 || cp == 0x00A7 || cp == 0x00AB || cp == 0x00B6 || cp == 0x00B7 ||
           cp == 0x00BB || cp == 0x00BF;
  }
  if (cp >= 0x0370 && cp <= 0x052F) return true;   // Greek, Cyrillic
  if (cp >= 0x0590 && cp <= 0x06FF) return true;   // Hebrew, Arabic
  if (cp >= 0x0900 && cp <= 0x0DFF) return true;   // Indic scripts
  if (cp >= 0x1E00 && cp <= 0x1FFF) return true;   // Latin/Greek extended
  if (cp >= 0x2010 && cp <= 0x2027) return true;   // dashes, quotes, ellipsis
  if (cp >= 0x2030 && cp <= 0x205E) return true;
  if (cp >= 0x3000 && cp <= 0x303F) return true;   // CJK punctuation
  if (cp >= 0x3040 && cp <= 0x30FF) return true;   // kana
  if (cp >= 0x4E00 && cp <= 0x9FFF) return true;   // CJK ideographs
  if (cp >= 0xAC00 && cp <= 0xD7AF) return true;   // Hangul
  return false;
}

}  // namespace detail

/// Drops every character that is not a letter, digit, punctuation mark or
/// white space (emoji, symbols, control characters).
inline std::string filter_characters(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t start = i;
    const char32_t cp = detail::next_code_point(s, i);
    bool keep = false;
    if (cp < 0x80) {
      const int c = static_cast<int>(cp);
      keep = std::isalnum(c) || std::ispunct(c) || c == ' ' || c == '\t' || c == '\n' || c == '\r';
    } else {
      keep = detail::keep_non_ascii(cp);
    }
    if (keep) out.append(s.substr(start, i - start));
  }
  return out;
}

/// Lowercases, whitespace-splits and detaches leading/trailing ASCII
/// punctuation into separate tokens ("[12]." -> "[", "12", "]", ".").
inline std::vector<std::string> tokenize(std::string_view sentence) {
  std::string text = filter_characters(sentence);
  for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string_view word(text.data() + i, j - i);
      std::size_t a = 0, b = word.size();
      while (a < b && std::ispunct(static_cast<unsigned char>(word[a]))) {
        tokens.emplace_back(1, word[a]);
        ++a;
      }
      std::vector<std::string> tail;
      while (b > a && std::ispunct(static_cast<unsigned char>(word[b - 1]))) {
        tail.emplace_back(1, word[b - 1]);
        --b;
      }
      if (b > a) tokens.emplace_back(word.substr(a, b - a));
      tokens.insert(tokens.end(), tail.rbegin(), tail.rend());
    }
    i = j;
  }
  return tokens;
}

/// Splits raw text after '.', '!' or '?' followed by white space or the end.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    auto a = cur.find_first_not_of(" \t\r\n");
    if (a != std::string::npos) {
      auto b = cur.find_last_not_of(" \t\r\n");
      out.push_back(cur.substr(a, b - a + 1));
    }
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      flush();
    }
  }
  flush();
  return out;
}

class Vocabulary {
 public:
  Vocabulary() : tokens_{kUnkToken, kPadToken} {
    index_[kUnkToken] = kUnkId;
    index_[kPadToken] = kPadId;
  }

  /// Vocabulary of all tokens with count >= min_count, most frequent first
  /// (ties lexicographic), capped at max_size entries including reserved ids.
  static Vocabulary build(const std::vector<std::vector<std::string>>& token_lists,
                          std::size_t max_size = 0, std::size_t min_count = 1) {
    std::map<std::string, std::size_t> counts;
    for (const auto& list : token_lists)
      for (const auto& tok : list) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, n] : items) {
      if (n < min_count) continue;
      if (max_size && v.size() >= max_size) break;
      v.add(tok);
    }
    return v;
  }

  std::int32_t add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  std::int32_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 2 || tokens[0] != kUnkToken || tokens[1] != kPadToken) {
      throw std::invalid_argument("vocabulary must start with the reserved <unk> and <pad> tokens");
    }
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// A document: raw sentences, their tokens and (after indexing) token ids.
struct Document {
  std::string id;
  std::vector<std::string> raw_sentences;
  std::vector<std::vector<std::string>> tokens;
  std::vector<std::vector<std::int32_t>> sentences;

  std::size_t sentence_count() const { return raw_sentences.size(); }
  bool operator==(const Document&) const = default;
};

/// Builds a document from raw sentences. A sentence that tokenizes to nothing
/// keeps its slot as a single <unk> so sentence indices stay aligned.
inline Document make_document(std::string id, std::vector<std::string> raw_sentences) {
  if (raw_sentences.empty()) throw std::invalid_argument("document '" + id + "' has no sentences");
  Document d;
  d.id = std::move(id);
  d.raw_sentences = std::move(raw_sentences);
  for (const auto& s : d.raw_sentences) {
    auto toks = tokenize(s);
    if (toks.empty()) toks.push_back(kUnkToken);
    d.tokens.push_back(std::move(toks));
  }
  return d;
}

/// Fills token ids, truncating to `max_sentences` x `max_tokens`.
inline void index_document(Document& d, const Vocabulary& vocab, std::size_t max_tokens = 64,
                           std::size_t max_sentences = 64) {
  d.sentences.clear();
  const std::size_t ns = std::min(d.tokens.size(), max_sentences);
  for (std::size_t s = 0; s < ns; ++s) {
    std::vector<std::int32_t> ids;
    const std::size_t nt = std::min(d.tokens[s].size(), max_tokens);
    for (std::size_t t = 0; t < nt; ++t) ids.push_back(vocab.id(d.tokens[s][t]));
    if (ids.empty()) ids.push_back(kUnkId);
    d.sentences.push_back(std::move(ids));
  }
}

}  // namespace cda
