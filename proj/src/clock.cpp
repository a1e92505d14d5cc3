#include "tomb/clock.hpp"

#include <cstdio>
#include <mutex>
#include <stdexcept>

namespace tomb {
namespace {

std::mutex g_source_mutex;
std::function<Timestamp()> g_source;

}  // namespace

Timestamp now_utc() {
  {
    std::lock_guard lock(g_source_mutex);
    if (g_source) return g_source();
  }
  return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

void set_time_source(std::function<Timestamp()> source) {
  std::lock_guard lock(g_source_mutex);
  g_source = std::move(source);
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day = floor<days>(ts);
  const year_month_day ymd{day};
  const hh_mm_ss hms{ts - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, s = 0;
  char tail = 0;
  const std::string owned(text);
  if (owned.size() != 20 ||
      std::sscanf(owned.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail) != 7 ||
      tail != 'Z') {
    throw std::invalid_argument("not a UTC timestamp: " + owned);
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0) {
    throw std::invalid_argument("timestamp out of range: " + owned);
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

}  // namespace tomb
