#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace tomb {

using Timestamp = std::chrono::sys_seconds;

// Wall clock in UTC, truncated to whole seconds. Tests may pin it.
Timestamp now_utc();

// Replaces the time source process-wide; pass an empty function to restore
// the system clock.
void set_time_source(std::function<Timestamp()> source);

// RFC 3339 with a literal Z suffix, e.g. "2026-10-18T09:30:00Z".
std::string format_timestamp(Timestamp ts);

// Accepts only the format produced by format_timestamp; throws
// std::invalid_argument otherwise.
Timestamp parse_timestamp(std::string_view text);

}  // namespace tomb
