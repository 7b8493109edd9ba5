#ifndef SELBIAS_SENTENCES_HPP_
#define SELBIAS_SENTENCES_HPP_

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "selbias/text.hpp"

namespace selbias {

namespace detail {

inline constexpr std::array<std::string_view, 44> kAbbreviations = {
    "mr",   "mrs",  "ms",   "dr",   "prof", "sen",  "rep",  "gov",  "gen",
    "lt",   "col",  "sgt",  "capt", "st",   "jr",   "sr",   "inc",  "corp",
    "co",   "ltd",  "vs",   "etc",  "jan",  "feb",  "mar",  "apr",  "jun",
    "jul",  "aug",  "sep",  "sept", "oct",  "nov",  "dec",  "no",   "mt",
    "ft",   "rev",  "hon",  "pres", "atty", "dept", "est",  "approx"};

inline bool is_closer(char c) {
  return c == '.' || c == '!' || c == '?' || c == '"' || c == '\'' ||
         c == ')' || c == ']';
}

// True when the '.' at `dot` ends an abbreviation: a stop-list word, or a
// dotted acronym such as "U.S.".
inline bool ends_abbreviation(std::string_view s, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && s[b - 1] != ' ') --b;
  std::string_view word = s.substr(b, dot - b);
  while (!word.empty() && (word.front() == '(' || word.front() == '"' ||
                           word.front() == '\'' || word.front() == '[')) {
    word.remove_prefix(1);
  }
  if (word.empty()) return false;
  if (word.find('.') != std::string_view::npos) return true;
  const std::string lowered = text::lower(word);
  for (std::string_view abbr : kAbbreviations) {
    if (lowered == abbr) return true;
  }
  return false;
}

}  // namespace detail

// Byte ranges of the sentences in normalized text. A boundary is a run of
// `.`, `!` or `?` (plus closing quotes/brackets) followed by a space and an
// uppercase letter, optionally behind an opening quote or bracket. Periods
// that end a stop-list abbreviation or a dotted acronym never split.
inline std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    std::string_view body) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < body.size()) {
    const char c = body[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < body.size() && detail::is_closer(body[j])) ++j;
    const bool guarded = c == '.' && j == i + 1 &&
                         detail::ends_abbreviation(body, i);
    bool boundary = false;
    if (!guarded && j < body.size() && body[j] == ' ') {
      std::size_t k = j + 1;
      while (k < body.size() && (body[k] == '"' || body[k] == '(' ||
                                 body[k] == '\'' || body[k] == '[')) {
        ++k;
      }
      if (k < body.size()) {
        const auto cps = text::decode(body.substr(k, 4));
        boundary = !cps.empty() && text::is_upper(cps.front().value);
      }
    }
    if (boundary) {
      spans.emplace_back(start, j);
      start = j + 1;
    }
    i = j;
  }
  if (start < body.size()) spans.emplace_back(start, body.size());
  return spans;
}

// Splits normalized text into sentences; joining them with single spaces
// reconstructs the input.
inline std::vector<std::string> split_sentences(std::string_view body) {
  std::vector<std::string> out;
  for (auto [b, e] : sentence_spans(body)) {
    out.emplace_back(body.substr(b, e - b));
  }
  return out;
}

}  // namespace selbias

#endif  // SELBIAS_SENTENCES_HPP_
