#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "marss2l/error.hpp"

namespace marss2l {

using Timestamp = std::chrono::sys_seconds;

inline Timestamp make_time(int y, unsigned mo, unsigned d, int h = 0, int mi = 0, int s = 0) {
  using namespace std::chrono;
  sys_days date = year{y} / month{mo} / day{d};
  return Timestamp{date} + hours{h} + minutes{mi} + seconds{s};
}

/// Formats as RFC 3339 in UTC with a literal 'Z' suffix, e.g. 2024-03-05T10:31:00Z.
inline std::string to_rfc3339(Timestamp t) {
  using namespace std::chrono;
  auto date = floor<days>(t);
  year_month_day ymd{date};
  hh_mm_ss hms{t - date};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                int(hms.minutes().count()), int(hms.seconds().count()));
  return buf;
}

/// Accepts "YYYY-MM-DDTHH:MM:SS" followed by 'Z' or a +HH:MM / -HH:MM offset.
/// Fractional seconds are truncated.
inline Timestamp parse_rfc3339(std::string_view s) {
  int y, mo, d, h, mi, sec;
  char tail[16] = {0};
  std::string str(s);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2d%*1[Tt ]%2d:%2d:%2d%15s", &y, &mo, &d, &h, &mi, &sec,
                  tail) < 6)
    throw FormatError("bad RFC 3339 timestamp: " + str);
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60)
    throw FormatError("RFC 3339 field out of range: " + str);
  std::string_view rest(tail);
  if (!rest.empty() && rest.front() == '.') {
    auto p = rest.find_first_not_of("0123456789", 1);
    rest = p == std::string_view::npos ? std::string_view{} : rest.substr(p);
  }
  long offset = 0;
  if (rest.empty() || rest == "Z" || rest == "z") {
  } else if ((rest.front() == '+' || rest.front() == '-') && rest.size() == 6 && rest[3] == ':') {
    int oh = std::stoi(std::string(rest.substr(1, 2)));
    int om = std::stoi(std::string(rest.substr(4, 2)));
    offset = (rest.front() == '+' ? 1 : -1) * (oh * 3600L + om * 60L);
  } else {
    throw FormatError("bad RFC 3339 offset: " + str);
  }
  return make_time(y, unsigned(mo), unsigned(d), h, mi, sec) - std::chrono::seconds{offset};
}

/// Compact form used in identifiers: 20240305T103100.
inline std::string compact_time(Timestamp t) {
  std::string s = to_rfc3339(t);
  std::string out;
  for (char c : s)
    if (c != '-' && c != ':' && c != 'Z') out.push_back(c);
  return out;
}

}  // namespace marss2l
