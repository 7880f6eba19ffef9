#pragma once

// Hourly emissions rebuilt from a run's placement and activation logs alone.

#include <algorithm>
#include <vector>

#include "carbonedge/sim.hpp"

namespace carbonedge::testing {

inline std::vector<double> ledger(const RunResult& run, const Dataset& data, const ScenarioConfig& c) {
  const auto hours = static_cast<std::size_t>((c.end - c.start) / Hours{1});
  std::vector<double> g(hours, 0.0);
  for (std::size_t h = 0; h < hours; ++h) {
    const TimePoint a = c.start + Hours{static_cast<long>(h)};
    const TimePoint b = a + Hours{1};
    for (const auto& p : run.placements) {
      const auto lo = std::max(a, p.start), hi = std::min(b, p.end);
      if (hi <= lo) continue;
      g[h] += p.energy_kwh_per_hour * static_cast<double>((hi - lo).count()) / 3600.0 * data.carbon.at(p.zone_id).at(a);
    }
    for (const auto& act : run.activations) {
      const auto lo = std::max(a, act.time);
      if (b <= lo) continue;
      g[h] += act.base_power_kwh_per_h * static_cast<double>((b - lo).count()) / 3600.0 *
              data.carbon.at(act.zone_id).at(a);
    }
  }
  return g;
}

}  // namespace carbonedge::testing
