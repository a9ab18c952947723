#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "luna/text.hpp"

namespace luna::text {

namespace {

bool is_vowel_letter(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// y is a consonant at the start of a word or after a vowel.
std::vector<bool> consonant_flags(std::string_view w) {
  std::vector<bool> flags(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (is_vowel_letter(w[i])) {
      flags[i] = false;
    } else if (w[i] == 'y') {
      flags[i] = i == 0 ? true : !flags[i - 1];
    } else {
      flags[i] = true;
    }
  }
  return flags;
}

bool is_consonant(std::string_view w, std::size_t i) { return consonant_flags(w.substr(0, i + 1))[i]; }

// m in [C](VC){m}[V]
int measure(std::string_view stem) {
  const auto flags = consonant_flags(stem);
  int m = 0;
  for (std::size_t i = 1; i < flags.size(); ++i) {
    if (!flags[i - 1] && flags[i]) ++m;
  }
  return m;
}

bool contains_vowel(std::string_view stem) {
  for (bool c : consonant_flags(stem)) {
    if (!c) return true;
  }
  return false;
}

bool ends_double_consonant(std::string_view w) {
  return w.size() >= 2 && w[w.size() - 1] == w[w.size() - 2] && is_consonant(w, w.size() - 1);
}

// *o: ends consonant-vowel-consonant, the last not w, x or y.
bool ends_cvc(std::string_view w) {
  const std::size_t n = w.size();
  if (n < 3) return false;
  const auto flags = consonant_flags(w);
  return flags[n - 3] && !flags[n - 2] && flags[n - 1] && w[n - 1] != 'w' && w[n - 1] != 'x' &&
         w[n - 1] != 'y';
}

bool ends_with(std::string_view w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
}

struct Rule {
  std::string_view suffix;
  std::string_view replacement;
  std::function<bool(std::string_view)> condition;  // on the stem without the suffix
};

// The first rule whose suffix matches decides; a failing condition leaves the word unchanged.
std::string apply_rules(const std::string& word, const std::vector<Rule>& rules) {
  for (const auto& rule : rules) {
    if (!ends_with(word, rule.suffix)) continue;
    std::string stem = word.substr(0, word.size() - rule.suffix.size());
    if (!rule.condition || rule.condition(stem)) return stem + std::string(rule.replacement);
    return word;
  }
  return word;
}

bool positive_measure(std::string_view s) { return measure(s) > 0; }
bool measure_above_one(std::string_view s) { return measure(s) > 1; }

std::string step1a(const std::string& w) {
  return apply_rules(w, {{"sses", "ss", nullptr}, {"ies", "i", nullptr}, {"ss", "ss", nullptr}, {"s", "", nullptr}});
}

std::string step1b(const std::string& w) {
  if (ends_with(w, "eed")) {
    std::string stem = w.substr(0, w.size() - 3);
    return measure(stem) > 0 ? stem + "ee" : w;
  }
  std::string stem;
  bool stripped = false;
  for (std::string_view suffix : {"ed", "ing"}) {
    if (ends_with(w, suffix)) {
      std::string candidate = w.substr(0, w.size() - suffix.size());
      if (contains_vowel(candidate)) {
        stem = std::move(candidate);
        stripped = true;
        break;
      }
    }
  }
  if (!stripped) return w;

  if (ends_with(stem, "at") || ends_with(stem, "bl") || ends_with(stem, "iz")) return stem + "e";
  if (ends_double_consonant(stem)) {
    const char last = stem.back();
    if (last != 'l' && last != 's' && last != 'z') stem.pop_back();
    return stem;
  }
  if (measure(stem) == 1 && ends_cvc(stem)) return stem + "e";
  return stem;
}

std::string step1c(const std::string& w) { return apply_rules(w, {{"y", "i", contains_vowel}}); }

std::string step2(const std::string& w) {
  static const std::vector<Rule> rules = {
      {"ational", "ate", positive_measure}, {"tional", "tion", positive_measure},
      {"enci", "ence", positive_measure},   {"anci", "ance", positive_measure},
      {"izer", "ize", positive_measure},    {"abli", "able", positive_measure},
      {"alli", "al", positive_measure},     {"entli", "ent", positive_measure},
      {"eli", "e", positive_measure},       {"ousli", "ous", positive_measure},
      {"ization", "ize", positive_measure}, {"ation", "ate", positive_measure},
      {"ator", "ate", positive_measure},    {"alism", "al", positive_measure},
      {"iveness", "ive", positive_measure}, {"fulness", "ful", positive_measure},
      {"ousness", "ous", positive_measure}, {"aliti", "al", positive_measure},
      {"iviti", "ive", positive_measure},   {"biliti", "ble", positive_measure},
  };
  return apply_rules(w, rules);
}

std::string step3(const std::string& w) {
  static const std::vector<Rule> rules = {
      {"icate", "ic", positive_measure}, {"ative", "", positive_measure}, {"alize", "al", positive_measure},
      {"iciti", "ic", positive_measure}, {"ical", "ic", positive_measure}, {"ful", "", positive_measure},
      {"ness", "", positive_measure},
  };
  return apply_rules(w, rules);
}

std::string step4(const std::string& w) {
  static const auto ion_condition = [](std::string_view s) {
    return measure(s) > 1 && !s.empty() && (s.back() == 's' || s.back() == 't');
  };
  static const std::vector<Rule> rules = {
      {"al", "", measure_above_one},   {"ance", "", measure_above_one}, {"ence", "", measure_above_one},
      {"er", "", measure_above_one},   {"ic", "", measure_above_one},   {"able", "", measure_above_one},
      {"ible", "", measure_above_one}, {"ant", "", measure_above_one},  {"ement", "", measure_above_one},
      {"ment", "", measure_above_one}, {"ent", "", measure_above_one},  {"ion", "", ion_condition},
      {"ou", "", measure_above_one},   {"ism", "", measure_above_one},  {"ate", "", measure_above_one},
      {"iti", "", measure_above_one},  {"ous", "", measure_above_one},  {"ive", "", measure_above_one},
      {"ize", "", measure_above_one},
  };
  return apply_rules(w, rules);
}

std::string step5a(const std::string& w) {
  if (!ends_with(w, "e")) return w;
  std::string stem = w.substr(0, w.size() - 1);
  const int m = measure(stem);
  if (m > 1 || (m == 1 && !ends_cvc(stem))) return stem;
  return w;
}

std::string step5b(const std::string& w) {
  if (ends_with(w, "ll") && measure(std::string_view(w).substr(0, w.size() - 1)) > 1) {
    return w.substr(0, w.size() - 1);
  }
  return w;
}

}  // namespace

std::string porter_stem(std::string_view token) {
  std::string w(token);
  for (char c : w) {
    // Non-ASCII-letter tokens (digits, punctuation, other scripts) pass through.
    if (c < 'a' || c > 'z') return w;
  }
  w = step1a(w);
  w = step1b(w);
  w = step1c(w);
  w = step2(w);
  w = step3(w);
  w = step4(w);
  w = step5a(w);
  w = step5b(w);
  return w;
}

}  // namespace luna::text
