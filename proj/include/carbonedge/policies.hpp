#pragma once

// Placement policies: the carbon-optimal program, the carbon/energy trade-off,
// and the latency-, energy- and intensity-aware baselines.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carbonedge/model.hpp"
#include "carbonedge/solver.hpp"

namespace carbonedge {

enum class PolicyKind { kCarbonEdge, kLatencyAware, kEnergyAware, kIntensityAware, kTradeoff };

std::string_view to_string(PolicyKind kind);
// Throws Error(kConfig) for an unknown name.
PolicyKind parse_policy_kind(std::string_view name);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kCarbonEdge;
  std::optional<double> alpha;  // weight of energy; tradeoff only
  SolverOptions solver;
  double duration_hours = 1.0;  // placement horizon applied to every rate
};

// Throws Error(kConfig) unless alpha is present exactly for tradeoff and lies
// in [0, 1], the time limit and duration are positive and the gap is >= 0.
void validate(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PolicyConfig& config);

// Min-max constants of the trade-off objective, taken over latency-feasible
// (app, server) pairs of the batch. A zero range is stored as 1.
struct Normalization {
  double energy_min = 0.0;
  double energy_range = 1.0;
  double emission_min = 0.0;
  double emission_range = 1.0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::kInfeasible;
  std::optional<PlacementPlan> plan;  // absent unless some plan was found
  double objective_value = 0.0;       // in the policy's own objective
  double lower_bound = 0.0;
  double solve_time_ms = 0.0;
  std::uint64_t nodes = 0;
  std::optional<Normalization> normalization;
  std::vector<std::string> unplaceable;  // apps without any latency-feasible server
};

nlohmann::json to_json(const SolveResult& result);

struct CandidateSets {
  // Per app: indices into the server list with rtt <= limit and a profile row.
  std::vector<std::vector<std::size_t>> servers;
  std::vector<std::vector<double>> rtt_ms;  // parallel to `servers`
  std::vector<std::string> flagged;         // apps with an empty set, in batch order

  bool all_placeable() const { return flagged.empty(); }
};

// Throws Error(kData) when an origin/server latency cannot be resolved.
CandidateSets prune_feasible(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                             const Topology& topology);

// Minimum emissions under the decision forecasts. In batches above the exact
// threshold the search starts from the greedy baselines' plans, so the result
// is never worse than theirs.
SolveResult solve_carbon_optimal(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                                 const Topology& topology, const IntensityForecasts& forecasts,
                                 const PolicyConfig& config);

SolveResult solve_tradeoff(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                           const Topology& topology, const IntensityForecasts& forecasts, double alpha,
                           const PolicyConfig& config);

// kind must be latency_aware, energy_aware or intensity_aware.
SolveResult solve_baseline(PolicyKind kind, std::span<const ApplicationRequest> apps,
                           std::span<const ServerState> servers, const Topology& topology,
                           const IntensityForecasts& forecasts, const PolicyConfig& config);

// Dispatches on config.kind.
SolveResult solve_policy(const PolicyConfig& config, std::span<const ApplicationRequest> apps,
                         std::span<const ServerState> servers, const Topology& topology,
                         const IntensityForecasts& forecasts);

}  // namespace carbonedge
