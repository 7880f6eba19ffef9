#pragma once

// Self-contained synthetic data sets on disk: traces, latencies, cities,
// data centers, workload profiles and a scenario that references them.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "carbonedge/sim.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge {

// Three accelerator classes and four inference workloads. The numbers are
// invented but keep the usual ordering: the small board is frugal and slow,
// the large card fast and power hungry.
ProfileRegistry synthetic_profiles();

// 48 hours from the generator start, one arrival per data center per hour,
// three servers per data center, carbon_edge.
ScenarioConfig default_scenario(const GeneratorConfig& generator, std::uint64_t seed);

// Writes carbon.csv, latency.csv, cities.csv, datacenters.csv, profiles.json
// and scenario.json into `dir` and returns their paths.
std::vector<std::filesystem::path> write_fixtures(const std::filesystem::path& dir, const GeneratorConfig& generator,
                                                  std::uint64_t seed);

}  // namespace carbonedge
