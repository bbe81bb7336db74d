#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "loadfuse/errors.hpp"

namespace loadfuse {

// Civil-time arithmetic on a fixed UTC grid. No timezone or DST handling.

// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

// Parses "YYYY-MM-DDTHH:MM:SSZ" (strict) to Unix seconds.
inline std::int64_t parse_iso8601(const std::string& s) {
  int y, hh, mm, ss;
  unsigned mo, dd;
  char t, z;
  if (std::sscanf(s.c_str(), "%d-%u-%u%c%d:%d:%d%c", &y, &mo, &dd, &t, &hh,
                  &mm, &ss, &z) != 8 ||
      (t != 'T' && t != ' ') || z != 'Z') {
    throw ParseError("bad ISO-8601 timestamp '" + s + "'");
  }
  if (mo < 1 || mo > 12 || dd < 1 || dd > 31 || hh < 0 || hh > 23 || mm < 0 ||
      mm > 59 || ss < 0 || ss > 60) {
    throw ParseError("timestamp field out of range in '" + s + "'");
  }
  return days_from_civil(y, mo, dd) * 86400LL + hh * 3600LL + mm * 60LL + ss;
}

inline std::string format_iso8601(std::int64_t unix_s) {
  std::int64_t days = unix_s / 86400;
  std::int64_t rem = unix_s % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y;
  unsigned mo, dd;
  civil_from_days(days, y, mo, dd);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y,
                mo, dd, static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

// Midnight (UTC) on or before the given instant.
inline std::int64_t floor_to_midnight(std::int64_t unix_s) {
  std::int64_t d = unix_s / 86400;
  if (unix_s % 86400 < 0) d -= 1;
  return d * 86400;
}

}  // namespace loadfuse
