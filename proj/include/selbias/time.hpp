#ifndef SELBIAS_TIME_HPP_
#define SELBIAS_TIME_HPP_

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace selbias {

// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

namespace detail {

inline std::optional<int> parse_fixed(std::string_view s, std::size_t pos,
                                      std::size_t width) {
  if (pos + width > s.size()) return std::nullopt;
  int value = 0;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
    value = value * 10 + (s[i] - '0');
  }
  return value;
}

}  // namespace detail

// Accepts `YYYY-MM-DD` (midnight UTC) and RFC-3339
// `YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)`; a space may stand in for
// the `T`. Fractional seconds are truncated.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  const auto year = detail::parse_fixed(s, 0, 4);
  const auto month = detail::parse_fixed(s, 5, 2);
  const auto day = detail::parse_fixed(s, 8, 2);
  if (!year || !month || !day || s.size() < 10 || s[4] != '-' || s[7] != '-') {
    return std::nullopt;
  }
  const year_month_day ymd{std::chrono::year{*year},
                           std::chrono::month{static_cast<unsigned>(*month)},
                           std::chrono::day{static_cast<unsigned>(*day)}};
  if (!ymd.ok()) return std::nullopt;
  std::int64_t secs = sys_days{ymd}.time_since_epoch().count() * 86400LL;
  if (s.size() == 10) return secs;

  if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
  const auto hh = detail::parse_fixed(s, 11, 2);
  const auto mm = detail::parse_fixed(s, 14, 2);
  const auto ss = detail::parse_fixed(s, 17, 2);
  if (!hh || !mm || !ss || s.size() < 19 || s[13] != ':' || s[16] != ':' ||
      *hh > 23 || *mm > 59 || *ss > 60) {
    return std::nullopt;
  }
  secs += *hh * 3600LL + *mm * 60LL + *ss;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t digits = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == digits) return std::nullopt;
  }
  if (pos == s.size()) return std::nullopt;  // offset is mandatory
  if (s[pos] == 'Z' || s[pos] == 'z') {
    return pos + 1 == s.size() ? std::optional<Timestamp>(secs) : std::nullopt;
  }
  if (s[pos] != '+' && s[pos] != '-') return std::nullopt;
  const int sign = s[pos] == '+' ? 1 : -1;
  const auto oh = detail::parse_fixed(s, pos + 1, 2);
  const auto om = detail::parse_fixed(s, pos + 4, 2);
  if (!oh || !om || pos + 6 != s.size() || s[pos + 3] != ':' || *oh > 23 ||
      *om > 59) {
    return std::nullopt;
  }
  return secs - sign * (*oh * 3600LL + *om * 60LL);
}

// RFC-3339 in UTC with second precision, e.g. 2020-03-01T12:00:00Z.
inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto days_since = static_cast<int>(
      (t >= 0 ? t : t - 86399) / 86400);
  const std::int64_t rem = t - static_cast<std::int64_t>(days_since) * 86400;
  const year_month_day ymd{sys_days{days{days_since}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
  return buf;
}

}  // namespace selbias

#endif  // SELBIAS_TIME_HPP_
