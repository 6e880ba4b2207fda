#include "trapwatch/core/time.hpp"

#include <array>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

namespace trapwatch {
namespace {

using namespace std::chrono;

// Cursor over a string with small parsing helpers; every helper leaves the
// cursor untouched on failure.
struct Scanner {
  std::string_view s;
  std::size_t pos = 0;

  bool done() const { return pos >= s.size(); }
  char peek() const { return done() ? '\0' : s[pos]; }

  bool digits(int count, int& value) {
    if (pos + static_cast<std::size_t>(count) > s.size()) return false;
    int v = 0;
    for (int i = 0; i < count; ++i) {
      char c = s[pos + static_cast<std::size_t>(i)];
      if (c < '0' || c > '9') return false;
      v = v * 10 + (c - '0');
    }
    pos += static_cast<std::size_t>(count);
    value = v;
    return true;
  }
  bool number(int& value) {
    auto res = std::from_chars(s.data() + pos, s.data() + s.size(), value);
    if (res.ec != std::errc{} || res.ptr == s.data() + pos) return false;
    pos = static_cast<std::size_t>(res.ptr - s.data());
    return true;
  }
  bool lit(char c) {
    if (peek() != c) return false;
    ++pos;
    return true;
  }
  void spaces() {
    while (!done() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  std::string_view word() {
    auto start = pos;
    while (!done() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(start, pos - start);
  }
};

std::optional<Timestamp> make_time(int y, int mo, int d, int h, int mi, int sec, int ms) {
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60 || ms > 999) return std::nullopt;
  auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{ms};
  return time_point_cast<milliseconds>(tp);
}

}  // namespace

Timestamp now_utc() { return time_point_cast<milliseconds>(system_clock::now()); }

std::string format_rfc3339(Timestamp t) {
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  hh_mm_ss<milliseconds> tod{t - day_point};
  auto ms = tod.subseconds().count();
  auto base = fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}", static_cast<int>(ymd.year()),
                          static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                          tod.hours().count(), tod.minutes().count(), tod.seconds().count());
  if (ms != 0) base += fmt::format(".{:03}", ms);
  base += 'Z';
  return base;
}

std::optional<Timestamp> parse_rfc3339(std::string_view text) {
  Scanner sc{text};
  int y, mo, d, h, mi, sec, ms = 0;
  if (!sc.digits(4, y) || !sc.lit('-') || !sc.digits(2, mo) || !sc.lit('-') ||
      !sc.digits(2, d)) {
    return std::nullopt;
  }
  if (!(sc.lit('T') || sc.lit('t') || sc.lit(' '))) return std::nullopt;
  if (!sc.digits(2, h) || !sc.lit(':') || !sc.digits(2, mi) || !sc.lit(':') ||
      !sc.digits(2, sec)) {
    return std::nullopt;
  }
  if (sc.lit('.')) {
    int scale = 100;
    bool any = false;
    while (!sc.done() && std::isdigit(static_cast<unsigned char>(sc.peek()))) {
      ms += (sc.peek() - '0') * scale;
      scale /= 10;
      ++sc.pos;
      any = true;
    }
    if (!any) return std::nullopt;
  }
  int offset_minutes = 0;
  if (sc.lit('Z') || sc.lit('z')) {
  } else if (sc.peek() == '+' || sc.peek() == '-') {
    int sign = sc.peek() == '-' ? -1 : 1;
    ++sc.pos;
    int oh, om;
    if (!sc.digits(2, oh) || !sc.lit(':') || !sc.digits(2, om)) return std::nullopt;
    offset_minutes = sign * (oh * 60 + om);
  } else {
    return std::nullopt;
  }
  if (!sc.done()) return std::nullopt;
  auto t = make_time(y, mo, d, h, mi, sec, ms);
  if (!t) return std::nullopt;
  return *t - minutes{offset_minutes};
}

std::optional<Timestamp> parse_mail_date(std::string_view text) {
  static constexpr std::array<std::string_view, 12> kMonths = {
      "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"};
  Scanner sc{text};
  sc.spaces();
  // Optional day-of-week.
  auto save = sc.pos;
  auto dow = sc.word();
  if (!dow.empty() && sc.lit(',')) {
    sc.spaces();
  } else {
    sc.pos = save;
  }
  int d, y, h, mi, sec = 0;
  if (!sc.number(d)) return std::nullopt;
  sc.spaces();
  auto mon = sc.word();
  if (mon.size() < 3) return std::nullopt;
  int mo = 0;
  for (std::size_t i = 0; i < kMonths.size(); ++i) {
    bool eq = true;
    for (std::size_t k = 0; k < 3; ++k) {
      if (std::tolower(static_cast<unsigned char>(mon[k])) != kMonths[i][k]) eq = false;
    }
    if (eq) mo = static_cast<int>(i) + 1;
  }
  if (mo == 0) return std::nullopt;
  sc.spaces();
  if (!sc.number(y)) return std::nullopt;
  if (y < 50) y += 2000;
  else if (y < 1000) y += 1900;
  sc.spaces();
  if (!sc.digits(2, h) || !sc.lit(':') || !sc.digits(2, mi)) return std::nullopt;
  if (sc.lit(':') && !sc.digits(2, sec)) return std::nullopt;
  sc.spaces();
  int offset_minutes = 0;
  if (sc.peek() == '+' || sc.peek() == '-') {
    int sign = sc.peek() == '-' ? -1 : 1;
    ++sc.pos;
    int hhmm;
    if (!sc.digits(4, hhmm)) return std::nullopt;
    offset_minutes = sign * ((hhmm / 100) * 60 + hhmm % 100);
  } else {
    // Obsolete zone names; only the UTC ones matter in practice.
    auto zone = sc.word();
    if (!zone.empty() && zone != "GMT" && zone != "UT" && zone != "UTC" && zone != "Z") {
      return std::nullopt;
    }
  }
  auto t = make_time(y, mo, d, h, mi, sec, 0);
  if (!t) return std::nullopt;
  return *t - minutes{offset_minutes};
}

std::optional<Timestamp> parse_exif_datetime(std::string_view text) {
  Scanner sc{text};
  int y, mo, d, h, mi, sec;
  if (!sc.digits(4, y) || !sc.lit(':') || !sc.digits(2, mo) || !sc.lit(':') ||
      !sc.digits(2, d) || !sc.lit(' ') || !sc.digits(2, h) || !sc.lit(':') ||
      !sc.digits(2, mi) || !sc.lit(':') || !sc.digits(2, sec)) {
    return std::nullopt;
  }
  return make_time(y, mo, d, h, mi, sec, 0);
}

}  // namespace trapwatch
