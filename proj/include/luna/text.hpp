#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "luna/core.hpp"

namespace luna::text {

struct TokenizerConfig {
  bool lowercase = true;
  bool split_punctuation = true;
  // Matched after lowercasing, so entries should already be lowercase when
  // `lowercase` is set.
  std::optional<std::unordered_set<std::string>> stopwords;
  bool stem = false;
};

struct TokenSequence {
  std::vector<std::string> tokens;
  std::string original;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
};

using NGram = std::vector<std::string>;

struct NGramMultiset {
  std::size_t n = 1;
  std::map<NGram, std::size_t> counts;

  std::size_t total() const;
  std::size_t distinct() const noexcept { return counts.size(); }
  std::size_t count(const NGram& g) const;
};

/// Splits on Unicode whitespace, then detaches every punctuation or symbol
/// code point (general categories P* and S*) as its own token. Lowercasing,
/// stopword removal and stemming follow, in that order.
TokenSequence tokenize(std::string_view text, const TokenizerConfig& config = {});

NGramMultiset word_ngrams(std::span<const std::string> tokens, std::size_t n);
inline NGramMultiset word_ngrams(const TokenSequence& seq, std::size_t n) {
  return word_ngrams(seq.tokens, n);
}

/// Character n-grams over code points; whitespace is dropped first when
/// strip_whitespace is set.
NGramMultiset char_ngrams(std::string_view text, std::size_t n, bool strip_whitespace);

/// Splits UTF-8 into code points. Invalid bytes come through one per element.
std::vector<std::string> code_points(std::string_view text);

std::string lowercase(std::string_view text);

/// Porter's original suffix-stripping algorithm (steps 1a through 5b).
std::string porter_stem(std::string_view token);

/// One token per line, `#` starts a comment.
std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path, bool lowercase_entries);

/// Reads the shared tokenizer overrides: lowercase, split_punctuation, stem,
/// stopwords_path.
TokenizerConfig tokenizer_from_params(ParamReader& reader);

}  // namespace luna::text
