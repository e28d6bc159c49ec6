#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "driftprobe/data.hpp"
#include "driftprobe/util/text.hpp"

namespace driftprobe::lexicon {

// Lowercases ASCII and folds the typographic apostrophe (U+2019) to '\''.
inline std::string normalize(std::string_view text) {
  std::string out = util::to_lower_ascii(text);
  return util::replace_all(std::move(out), "\xE2\x80\x99", "'");
}

inline bool is_word_char(char c) { return util::is_alnum(c) || c == '\''; }

// Occurrences of `phrase` in already-normalized `text` that start and end on
// word boundaries.
inline std::size_t count_phrase(std::string_view text, std::string_view phrase) {
  if (phrase.empty()) return 0;
  std::size_t n = 0;
  for (auto pos = text.find(phrase); pos != std::string_view::npos; pos = text.find(phrase, pos + 1)) {
    const auto end = pos + phrase.size();
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]) || !is_word_char(phrase.front());
    const bool right_ok = end == text.size() || !is_word_char(text[end]) || !is_word_char(phrase.back());
    if (left_ok && right_ok) ++n;
  }
  return n;
}

struct Lexicon {
  std::string name;
  std::vector<std::string> phrases;

  std::size_t count(std::string_view normalized_text) const {
    std::size_t n = 0;
    for (const auto& p : phrases) n += count_phrase(normalized_text, p);
    return n;
  }
  bool any(std::string_view normalized_text) const { return count(normalized_text) > 0; }
};

inline Lexicon load(std::string_view name) {
  Lexicon lx{std::string(name), {}};
  for (auto& p : util::read_list(data::file("lexicons/" + std::string(name) + ".txt"))) {
    lx.phrases.push_back(normalize(p));
  }
  return lx;
}

inline const Lexicon& hedge() {
  static const Lexicon lx = load("hedge");
  return lx;
}

inline const Lexicon& experiential() {
  static const Lexicon lx = load("experiential");
  return lx;
}

inline const Lexicon& commit() {
  static const Lexicon lx = load("commit");
  return lx;
}

// Splits on sentence-final punctuation and line breaks.
inline std::vector<std::string_view> sentences(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      auto s = util::trim(text.substr(start, i + 1 - start));
      if (!s.empty()) out.push_back(s);
      start = i + 1;
    }
  }
  auto tail = util::trim(text.substr(start));
  if (!tail.empty()) out.push_back(tail);
  return out;
}

// "Python — ..." style openers: a short capitalized pick followed by an em-dash.
inline bool leading_pick(std::string_view text) {
  text = util::trim(text);
  const auto dash = text.find("\xE2\x80\x94");
  if (dash == std::string_view::npos || dash == 0 || dash > 40) return false;
  const auto head = util::trim(text.substr(0, dash));
  if (head.empty() || !(head.front() >= 'A' && head.front() <= 'Z')) return false;
  return head.find_first_of(".!?\n") == std::string_view::npos && util::split_words(head).size() <= 4;
}

// True iff some sentence carries a commitment phrase and no hedge, or the
// response opens with a bare pick.
inline bool preference_commit(std::string_view text) {
  const auto first = sentences(text);
  if (!first.empty() && leading_pick(text) && !hedge().any(normalize(first.front()))) return true;
  for (auto s : first) {
    const auto norm = normalize(s);
    if (commit().any(norm) && !hedge().any(norm)) return true;
  }
  return false;
}

}  // namespace driftprobe::lexicon
