#include "luna/text.hpp"

#include <fstream>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace luna::text {

namespace {

struct CodePoint {
  UChar32 value;  // negative for an invalid byte
  std::string_view bytes;
};

std::vector<CodePoint> decode(std::string_view text) {
  std::vector<CodePoint> out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    out.push_back({c, text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start))});
  }
  return out;
}

bool is_space(UChar32 c) { return c >= 0 && u_isUWhiteSpace(c); }

bool is_punct_or_symbol(UChar32 c) {
  if (c < 0) return false;
  const auto mask = U_GET_GC_MASK(c);
  return (mask & (U_GC_P_MASK | U_GC_S_MASK)) != 0;
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  U8_APPEND_UNSAFE(buf, len, c);
  out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

std::size_t NGramMultiset::total() const {
  std::size_t sum = 0;
  for (const auto& [g, c] : counts) sum += c;
  return sum;
}

std::size_t NGramMultiset::count(const NGram& g) const {
  auto it = counts.find(g);
  return it == counts.end() ? 0 : it->second;
}

std::vector<std::string> code_points(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& cp : decode(text)) out.emplace_back(cp.bytes);
  return out;
}

std::string lowercase(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (const auto& cp : decode(text)) {
    if (cp.value < 0) {
      out.append(cp.bytes);
    } else {
      append_utf8(out, u_tolower(cp.value));
    }
  }
  return out;
}

TokenSequence tokenize(std::string_view text, const TokenizerConfig& config) {
  TokenSequence seq;
  seq.original = std::string(text);

  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      seq.tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (const auto& cp : decode(text)) {
    if (is_space(cp.value)) {
      flush();
    } else if (config.split_punctuation && is_punct_or_symbol(cp.value)) {
      flush();
      seq.tokens.emplace_back(cp.bytes);
    } else {
      current.append(cp.bytes);
    }
  }
  flush();

  if (!config.lowercase && !config.stopwords && !config.stem) return seq;

  std::vector<std::string> kept;
  kept.reserve(seq.tokens.size());
  for (auto& tok : seq.tokens) {
    std::string t = config.lowercase ? lowercase(tok) : std::move(tok);
    if (config.stopwords && config.stopwords->contains(t)) continue;
    if (config.stem) t = porter_stem(t);
    kept.push_back(std::move(t));
  }
  seq.tokens = std::move(kept);
  return seq;
}

NGramMultiset word_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NGramMultiset out;
  out.n = n;
  if (n == 0 || tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out.counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                       tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

NGramMultiset char_ngrams(std::string_view text, std::size_t n, bool strip_whitespace) {
  std::vector<std::string> chars;
  for (const auto& cp : decode(text)) {
    if (strip_whitespace && is_space(cp.value)) continue;
    chars.emplace_back(cp.bytes);
  }
  return word_ngrams(chars, n);
}

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path, bool lowercase_entries) {
  std::ifstream in(path);
  if (!in) {
    throw MetricError(ErrorKind::ConfigError, "", "cannot open stopword file '" + path.string() + "'");
  }
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r\n");
    std::string word = line.substr(first, last - first + 1);
    words.insert(lowercase_entries ? lowercase(word) : word);
  }
  return words;
}

TokenizerConfig tokenizer_from_params(ParamReader& reader) {
  TokenizerConfig config;
  config.lowercase = reader.get_bool("lowercase", config.lowercase);
  config.split_punctuation = reader.get_bool("split_punctuation", config.split_punctuation);
  config.stem = reader.get_bool("stem", config.stem);
  if (auto path = reader.get_optional_string("stopwords_path")) {
    try {
      config.stopwords = load_stopwords(*path, config.lowercase);
    } catch (const MetricError& e) {
      reader.reject("stopwords_path", e.detail());
    }
  }
  return config;
}

}  // namespace luna::text
