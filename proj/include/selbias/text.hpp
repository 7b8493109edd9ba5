#ifndef SELBIAS_TEXT_HPP_
#define SELBIAS_TEXT_HPP_

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <string>
#include <string_view>
#include <vector>

#include "selbias/common.hpp"

namespace selbias::text {

// One decoded code point and the byte range it occupies.
struct CodePoint {
  char32_t value = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Decodes UTF-8. Ill-formed sequences decode to U+FFFD covering the bad byte.
inline std::vector<CodePoint> decode(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) c = 0xFFFD;
    out.push_back({static_cast<char32_t>(c), static_cast<std::size_t>(start),
                   static_cast<std::size_t>(i)});
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t c) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool error = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
  if (error) {
    out += "\xEF\xBF\xBD";
    return;
  }
  out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

inline bool is_space(char32_t c) {
  return u_isUWhiteSpace(static_cast<UChar32>(c)) != 0;
}
inline bool is_alnum(char32_t c) {
  return u_isalnum(static_cast<UChar32>(c)) != 0;
}
inline bool is_upper(char32_t c) {
  return u_isUUppercase(static_cast<UChar32>(c)) != 0 ||
         u_istitle(static_cast<UChar32>(c)) != 0;
}
inline bool is_digit(char32_t c) {
  return u_isdigit(static_cast<UChar32>(c)) != 0;
}
inline char32_t to_lower(char32_t c) {
  return static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
}

// Unicode NFC.
inline std::string nfc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  if (normalizer->isNormalized(src, status) && U_SUCCESS(status)) {
    return std::string(s);
  }
  status = U_ZERO_ERROR;
  icu::UnicodeString dst = normalizer->normalize(src, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  std::string out;
  dst.toUTF8String(out);
  return out;
}

// Collapses every run of Unicode whitespace into one ASCII space and trims
// both ends.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (const CodePoint& cp : decode(s)) {
    if (is_space(cp.value)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.append(s.substr(cp.begin, cp.end - cp.begin));
  }
  return out;
}

// NFC followed by whitespace collapsing; the canonical form for all text the
// pipeline matches against.
inline std::string normalize(std::string_view s) {
  return collapse_whitespace(nfc(s));
}

inline std::string lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const CodePoint& cp : decode(s)) append_utf8(out, to_lower(cp.value));
  return out;
}

inline std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

// Lowercased word tokens: maximal runs of letters/digits (with inner
// apostrophes and hyphens kept). Used for corpus word counts.
inline std::vector<std::string> word_tokens(std::string_view s) {
  std::vector<std::string> out;
  const auto cps = decode(s);
  std::size_t i = 0;
  while (i < cps.size()) {
    if (!is_alnum(cps[i].value)) {
      ++i;
      continue;
    }
    std::string word;
    while (i < cps.size()) {
      const char32_t c = cps[i].value;
      if (is_alnum(c)) {
        append_utf8(word, to_lower(c));
        ++i;
      } else if ((c == U'\'' || c == U'-' || c == U'’') &&
                 i + 1 < cps.size() && is_alnum(cps[i + 1].value)) {
        append_utf8(word, c);
        ++i;
      } else {
        break;
      }
    }
    out.push_back(std::move(word));
  }
  return out;
}

}  // namespace selbias::text

#endif  // SELBIAS_TEXT_HPP_
