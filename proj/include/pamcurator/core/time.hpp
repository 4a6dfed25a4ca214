#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "pamcurator/core/error.hpp"

namespace pam {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

namespace detail {

// Proleptic Gregorian conversions (H. Hinnant's civil-from-days algorithms).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr CivilDate civil_from_days(std::int64_t z) noexcept {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

inline Timestamp make_timestamp(int year, unsigned month, unsigned day, unsigned hour = 0, unsigned minute = 0,
                                unsigned second = 0, unsigned millis = 0) {
  const std::int64_t days = detail::days_from_civil(year, month, day);
  const std::int64_t ms = ((days * 24 + hour) * 60 + minute) * 60'000 + second * 1000LL + millis;
  return Timestamp{std::chrono::milliseconds{ms}};
}

inline int year_of(Timestamp t) noexcept {
  const std::int64_t ms = t.time_since_epoch().count();
  return static_cast<int>(detail::civil_from_days(detail::floor_div(ms, 86'400'000)).year);
}

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]`; a space may replace the `T`.
inline Timestamp parse_timestamp(std::string_view text) {
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int consumed = 0;
  const std::string buf(text);
  if (std::sscanf(buf.c_str(), "%d-%u-%u%*1[T ]%u:%u:%u%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6 ||
      mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
    throw ArgumentError("invalid timestamp '" + buf + "'");
  }
  std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  unsigned millis = 0;
  if (!rest.empty() && rest.front() == '.') {
    rest.remove_prefix(1);
    unsigned scale = 100;
    while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9') {
      millis += static_cast<unsigned>(rest.front() - '0') * scale;
      scale /= 10;
      rest.remove_prefix(1);
    }
  }
  std::int64_t offset_min = 0;
  if (!rest.empty()) {
    if (rest == "Z" || rest == "z") {
      rest = {};
    } else if ((rest.front() == '+' || rest.front() == '-') && rest.size() == 6 && rest[3] == ':') {
      const int sign = rest.front() == '-' ? -1 : 1;
      const int oh = (rest[1] - '0') * 10 + (rest[2] - '0');
      const int om = (rest[4] - '0') * 10 + (rest[5] - '0');
      offset_min = sign * (oh * 60 + om);
    } else {
      throw ArgumentError("invalid timestamp suffix in '" + buf + "'");
    }
  }
  return make_timestamp(y, mo, d, h, mi, s, millis) - std::chrono::minutes{offset_min};
}

inline std::string format_timestamp(Timestamp t) {
  const std::int64_t ms = t.time_since_epoch().count();
  const std::int64_t days = detail::floor_div(ms, 86'400'000);
  const std::int64_t in_day = ms - days * 86'400'000;
  const auto date = detail::civil_from_days(days);
  const auto h = static_cast<int>(in_day / 3'600'000);
  const auto mi = static_cast<int>(in_day / 60'000 % 60);
  const auto s = static_cast<int>(in_day / 1000 % 60);
  const auto frac = static_cast<int>(in_day % 1000);
  char out[40];
  if (frac != 0) {
    std::snprintf(out, sizeof out, "%04lld-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<long long>(date.year),
                  date.month, date.day, h, mi, s, frac);
  } else {
    std::snprintf(out, sizeof out, "%04lld-%02u-%02uT%02d:%02d:%02dZ", static_cast<long long>(date.year), date.month,
                  date.day, h, mi, s);
  }
  return out;
}

inline double seconds_between(Timestamp a, Timestamp b) noexcept {
  return std::chrono::duration<double>(b - a).count();
}

}  // namespace pam
