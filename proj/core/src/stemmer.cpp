#include "catnet/stemmer.hpp"

#include <array>
#include <cstddef>

namespace catnet {
namespace {

bool is_consonant(const std::string& w, std::size_t i) {
  switch (w[i]) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return false;
    case 'y':
      return i == 0 ? true : !is_consonant(w, i - 1);
    default:
      return true;
  }
}

// m in [C](VC)^m[V]
int measure(const std::string& w) {
  int m = 0;
  std::size_t i = 0;
  const std::size_t n = w.size();
  while (i < n && is_consonant(w, i)) ++i;
  while (i < n) {
    while (i < n && !is_consonant(w, i)) ++i;
    if (i == n) break;
    ++m;
    while (i < n && is_consonant(w, i)) ++i;
  }
  return m;
}

bool contains_vowel(const std::string& w) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

bool double_consonant(const std::string& w) {
  const std::size_t n = w.size();
  return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

// *o: stem ends cvc where the final c is not w, x or y
bool cvc_end(const std::string& w) {
  const std::size_t n = w.size();
  if (n < 3) return false;
  if (!is_consonant(w, n - 3) || is_consonant(w, n - 2) || !is_consonant(w, n - 1)) return false;
  const char c = w[n - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Replaces suffix when the measure condition holds on the stem.
bool replace_if(std::string& w, std::string_view suffix, std::string_view repl, int min_m) {
  if (!ends_with(w, suffix)) return false;
  const std::string stem = w.substr(0, w.size() - suffix.size());
  if (measure(stem) > min_m) {
    w = stem + std::string(repl);
  }
  return true;  // suffix matched: stop scanning the rule list either way
}

void step_1a(std::string& w) {
  if (ends_with(w, "sses")) {
    w.erase(w.size() - 2);
  } else if (ends_with(w, "ies")) {
    w.erase(w.size() - 2);
  } else if (ends_with(w, "ss")) {
    // keep
  } else if (ends_with(w, "s")) {
    w.pop_back();
  }
}

void step_1b(std::string& w) {
  if (ends_with(w, "eed")) {
    const std::string stem = w.substr(0, w.size() - 3);
    if (measure(stem) > 0) w.pop_back();
    return;
  }
  bool stripped = false;
  if (ends_with(w, "ed")) {
    const std::string stem = w.substr(0, w.size() - 2);
    if (contains_vowel(stem)) {
      w = stem;
      stripped = true;
    }
  } else if (ends_with(w, "ing")) {
    const std::string stem = w.substr(0, w.size() - 3);
    if (contains_vowel(stem)) {
      w = stem;
      stripped = true;
    }
  }
  if (!stripped) return;
  if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
    w += 'e';
  } else if (double_consonant(w) && !ends_with(w, "l") && !ends_with(w, "s") && !ends_with(w, "z")) {
    w.pop_back();
  } else if (measure(w) == 1 && cvc_end(w)) {
    w += 'e';
  }
}

void step_1c(std::string& w) {
  if (ends_with(w, "y") && contains_vowel(w.substr(0, w.size() - 1))) {
    w.back() = 'i';
  }
}

void step_2(std::string& w) {
  static const std::array<std::pair<std::string_view, std::string_view>, 20> rules = {{
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},  {"biliti", "ble"},
  }};
  for (const auto& [suffix, repl] : rules) {
    if (replace_if(w, suffix, repl, 0)) return;
  }
}

void step_3(std::string& w) {
  static const std::array<std::pair<std::string_view, std::string_view>, 7> rules = {{
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""},
  }};
  for (const auto& [suffix, repl] : rules) {
    if (replace_if(w, suffix, repl, 0)) return;
  }
}

void step_4(std::string& w) {
  static const std::array<std::string_view, 19> suffixes = {
      "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
      "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize",
  };
  for (std::string_view suffix : suffixes) {
    if (!ends_with(w, suffix)) continue;
    const std::string stem = w.substr(0, w.size() - suffix.size());
    if (measure(stem) > 1) {
      if (suffix == "ion" && !(ends_with(stem, "s") || ends_with(stem, "t"))) return;
      w = stem;
    }
    return;
  }
}

void step_5a(std::string& w) {
  if (!ends_with(w, "e")) return;
  const std::string stem = w.substr(0, w.size() - 1);
  const int m = measure(stem);
  if (m > 1 || (m == 1 && !cvc_end(stem))) w = stem;
}

void step_5b(std::string& w) {
  if (measure(w) > 1 && double_consonant(w) && ends_with(w, "l")) w.pop_back();
}

}  // namespace

std::string porter_stem(std::string_view word) {
  std::string w(word);
  if (w.size() < 3) return w;
  step_1a(w);
  step_1b(w);
  step_1c(w);
  step_2(w);
  step_3(w);
  step_4(w);
  step_5a(w);
  step_5b(w);
  return w;
}

}  // namespace catnet
