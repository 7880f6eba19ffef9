#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace carbonedge {

using TimePoint = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;
using Hours = std::chrono::hours;

// Accepts "YYYY-MM-DDTHH:MM:SS" with an optional trailing "Z" or "+00:00",
// and the space-separated variant used by Electricity Maps exports.
// Throws Error(kParse) on anything else.
TimePoint parse_utc(std::string_view text);

// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_utc(TimePoint t);

inline bool is_hour_aligned(TimePoint t) {
  return t.time_since_epoch().count() % 3600 == 0;
}

inline TimePoint floor_hour(TimePoint t) {
  return std::chrono::floor<Hours>(t);
}

inline double hours_between(TimePoint from, TimePoint to) {
  return static_cast<double>((to - from).count()) / 3600.0;
}

// First instant of the given month (1-12) of the given year.
TimePoint month_start(int year, unsigned month);

int year_of(TimePoint t);

}  // namespace carbonedge
