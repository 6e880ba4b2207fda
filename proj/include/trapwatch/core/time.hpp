#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace trapwatch {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now_utc();

/// `2024-05-20T10:00:00Z`, with `.mmm` only when the milliseconds are
/// non-zero.
std::string format_rfc3339(Timestamp t);

/// Accepts `Z` or a numeric offset and an optional fractional part.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

/// RFC 5322 `Date:` header, e.g. `Tue, 21 May 2024 06:12:09 +0100`.
std::optional<Timestamp> parse_mail_date(std::string_view text);

/// EXIF `YYYY:MM:DD HH:MM:SS`, interpreted as UTC.
std::optional<Timestamp> parse_exif_datetime(std::string_view text);

inline std::int64_t to_millis(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_millis(std::int64_t ms) {
  return Timestamp{std::chrono::milliseconds{ms}};
}

}  // namespace trapwatch
