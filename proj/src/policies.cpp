#include "carbonedge/policies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "carbonedge/error.hpp"

namespace carbonedge {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using CostFn = std::function<double(const ProfileRow& row, const ServerState& server, double intensity)>;
using ActivationFn = std::function<double(const ServerState& server, double intensity)>;

struct Instance {
  AssignmentProblem problem;
  std::vector<std::size_t> server_of_rank;  // problem server index -> index into the server list
  std::vector<std::uint32_t> rank_of;       // inverse; UINT32_MAX for servers outside the problem
};

std::vector<std::string> dimension_names(std::span<const ApplicationRequest> apps,
                                         std::span<const ServerState> servers, const CandidateSets& cands) {
  std::set<std::string> dims;
  for (std::size_t i = 0; i < apps.size(); ++i) {
    for (auto s : cands.servers[i]) {
      for (const auto& [dim, q] : apps[i].row_for(servers[s])->demands) dims.insert(dim);
      for (const auto& [dim, c] : servers[s].capacities) dims.insert(dim);
    }
  }
  return {dims.begin(), dims.end()};
}

double value_of(const Resources& r, const std::string& dim) {
  auto it = r.find(dim);
  return it == r.end() ? 0.0 : it->second;
}

Instance build_instance(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                        const CandidateSets& cands, const Topology& topology,
                        const IntensityForecasts& forecasts, const CostFn& cost, const ActivationFn& activation) {
  Instance inst;
  std::vector<char> used(servers.size(), 0);
  for (const auto& set : cands.servers) {
    for (auto s : set) used[s] = 1;
  }
  for (std::size_t s = 0; s < servers.size(); ++s) {
    if (used[s]) inst.server_of_rank.push_back(s);
  }
  std::sort(inst.server_of_rank.begin(), inst.server_of_rank.end(),
            [&](std::size_t a, std::size_t b) { return servers[a].server_id < servers[b].server_id; });
  inst.rank_of.assign(servers.size(), std::numeric_limits<std::uint32_t>::max());
  for (std::size_t r = 0; r < inst.server_of_rank.size(); ++r) {
    inst.rank_of[inst.server_of_rank[r]] = static_cast<std::uint32_t>(r);
  }

  const auto dims = dimension_names(apps, servers, cands);
  auto& p = inst.problem;
  p.num_servers = inst.server_of_rank.size();
  p.num_dims = dims.size();
  std::vector<double> intensity(p.num_servers);
  for (std::size_t r = 0; r < p.num_servers; ++r) {
    const ServerState& s = servers[inst.server_of_rank[r]];
    intensity[r] = forecasts.mean(topology.zone_of(s.dc_id));
    for (const auto& dim : dims) p.capacity.push_back(value_of(s.capacities, dim));
    p.activation_cost.push_back(activation(s, intensity[r]));
    p.powered.push_back(s.powered_on ? 1 : 0);
  }
  for (std::size_t i = 0; i < apps.size(); ++i) {
    std::vector<AssignmentOption> opts;
    std::vector<double> demand;
    for (auto s : cands.servers[i]) {
      const auto r = inst.rank_of[s];
      const ProfileRow& row = *apps[i].row_for(servers[s]);
      opts.push_back({r, cost(row, servers[s], intensity[r])});
      for (const auto& dim : dims) demand.push_back(value_of(row.demands, dim));
    }
    p.add_app(std::move(opts), std::move(demand));
  }
  return inst;
}

PlacementPlan make_plan(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                        const std::vector<std::size_t>& server_index_of_app) {
  PlacementPlan plan;
  for (const auto& s : servers) plan.power_on[s.server_id] = s.powered_on;
  for (std::size_t i = 0; i < apps.size(); ++i) {
    const ServerState& s = servers[server_index_of_app[i]];
    plan.assignments[apps[i].app_id] = s.server_id;
    plan.power_on[s.server_id] = true;
  }
  return plan;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

SolveResult infeasible_result(const CandidateSets& cands, std::chrono::steady_clock::time_point start) {
  SolveResult r;
  r.status = SolveStatus::kInfeasible;
  r.unplaceable = cands.flagged;
  r.solve_time_ms = elapsed_ms(start);
  return r;
}

// Greedy in batch order; `key` ranks the candidates of one app, lower first.
using GreedyKey = std::tuple<double, double, std::string_view>;

std::optional<std::vector<std::size_t>> greedy_place(
    std::span<const ApplicationRequest> apps, std::span<const ServerState> servers, const CandidateSets& cands,
    const std::function<GreedyKey(std::size_t app, std::size_t cand)>& key) {
  std::vector<Resources> used(servers.size());
  std::vector<std::size_t> chosen(apps.size());
  for (std::size_t i = 0; i < apps.size(); ++i) {
    std::optional<std::size_t> best;
    GreedyKey best_key;
    for (std::size_t c = 0; c < cands.servers[i].size(); ++c) {
      const std::size_t s = cands.servers[i][c];
      const ProfileRow& row = *apps[i].row_for(servers[s]);
      bool fits = true;
      for (const auto& [dim, q] : row.demands) {
        if (capacity_exceeded(value_of(used[s], dim) + q, value_of(servers[s].capacities, dim))) {
          fits = false;
          break;
        }
      }
      if (!fits) continue;
      const GreedyKey k = key(i, c);
      if (!best || k < best_key) {
        best = s;
        best_key = k;
      }
    }
    if (!best) return std::nullopt;
    chosen[i] = *best;
    for (const auto& [dim, q] : apps[i].row_for(servers[*best])->demands) used[*best][dim] += q;
  }
  return chosen;
}

std::optional<std::vector<std::size_t>> greedy_baseline(PolicyKind kind, std::span<const ApplicationRequest> apps,
                                                        std::span<const ServerState> servers,
                                                        const CandidateSets& cands, const Topology& topology,
                                                        const IntensityForecasts& forecasts) {
  std::vector<double> intensity(servers.size());
  for (std::size_t s = 0; s < servers.size(); ++s) {
    intensity[s] = forecasts.contains(topology.zone_of(servers[s].dc_id))
                       ? forecasts.mean(topology.zone_of(servers[s].dc_id))
                       : kInf;
  }
  if (kind == PolicyKind::kLatencyAware) {
    return greedy_place(apps, servers, cands, [&](std::size_t i, std::size_t c) {
      const std::size_t s = cands.servers[i][c];
      return GreedyKey{cands.rtt_ms[i][c], intensity[s], servers[s].server_id};
    });
  }
  return greedy_place(apps, servers, cands, [&](std::size_t i, std::size_t c) {
    const std::size_t s = cands.servers[i][c];
    return GreedyKey{intensity[s], cands.rtt_ms[i][c], servers[s].server_id};
  });
}

SolveResult run_solver(const Instance& inst, std::span<const ApplicationRequest> apps,
                       std::span<const ServerState> servers, const Topology& topology,
                       const IntensityForecasts& forecasts, const PolicyConfig& config,
                       std::span<const std::vector<std::uint32_t>> seeds,
                       std::chrono::steady_clock::time_point start) {
  const SolverOutcome out = solve_assignment(inst.problem, config.solver, seeds);
  SolveResult r;
  r.status = out.status;
  r.lower_bound = out.lower_bound;
  r.nodes = out.nodes;
  if (out.best) {
    std::vector<std::size_t> chosen(apps.size());
    for (std::size_t i = 0; i < apps.size(); ++i) chosen[i] = inst.server_of_rank[out.best->server[i]];
    PlacementPlan plan = make_plan(apps, servers, chosen);
    annotate(plan, apps, servers, topology, forecasts, config.duration_hours);
    r.plan = std::move(plan);
    r.objective_value = out.best->value;
  }
  r.solve_time_ms = elapsed_ms(start);
  return r;
}

std::vector<std::vector<std::uint32_t>> baseline_seeds(const Instance& inst, std::span<const ApplicationRequest> apps,
                                                       std::span<const ServerState> servers,
                                                       const CandidateSets& cands, const Topology& topology,
                                                       const IntensityForecasts& forecasts) {
  std::vector<std::vector<std::uint32_t>> seeds;
  for (auto kind : {PolicyKind::kLatencyAware, PolicyKind::kIntensityAware}) {
    if (auto chosen = greedy_baseline(kind, apps, servers, cands, topology, forecasts)) {
      std::vector<std::uint32_t> seed(apps.size());
      for (std::size_t i = 0; i < apps.size(); ++i) seed[i] = inst.rank_of[(*chosen)[i]];
      seeds.push_back(std::move(seed));
    }
  }
  return seeds;
}

}  // namespace

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kCarbonEdge: return "carbon_edge";
    case PolicyKind::kLatencyAware: return "latency_aware";
    case PolicyKind::kEnergyAware: return "energy_aware";
    case PolicyKind::kIntensityAware: return "intensity_aware";
    case PolicyKind::kTradeoff: return "tradeoff";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
  for (auto k : {PolicyKind::kCarbonEdge, PolicyKind::kLatencyAware, PolicyKind::kEnergyAware,
                 PolicyKind::kIntensityAware, PolicyKind::kTradeoff}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::kConfig, "unknown policy '" + std::string(name) + "'");
}

void validate(const PolicyConfig& config) {
  if (config.kind == PolicyKind::kTradeoff) {
    if (!config.alpha) fail(ErrorKind::kConfig, "tradeoff policy requires alpha");
    if (!(*config.alpha >= 0.0 && *config.alpha <= 1.0)) fail(ErrorKind::kConfig, "alpha must lie in [0, 1]");
  } else if (config.alpha) {
    fail(ErrorKind::kConfig, "alpha is only valid for the tradeoff policy");
  }
  if (!(config.solver.time_limit_s > 0.0)) fail(ErrorKind::kConfig, "solver time_limit_s must be positive");
  if (!(config.solver.optimality_gap >= 0.0)) fail(ErrorKind::kConfig, "solver optimality_gap must be >= 0");
  if (config.solver.max_nodes == 0) fail(ErrorKind::kConfig, "solver max_nodes must be positive");
  if (!(config.duration_hours > 0.0) || !std::isfinite(config.duration_hours)) {
    fail(ErrorKind::kConfig, "duration_hours must be positive");
  }
}

PolicyConfig policy_config_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::kConfig, "policy config must be a JSON object");
  static const std::set<std::string> known{"kind", "alpha", "solver", "duration_hours"};
  static const std::set<std::string> solver_known{"time_limit_s", "optimality_gap", "exact_threshold", "max_nodes",
                                                  "tie_break"};
  PolicyConfig c;
  try {
    for (const auto& [key, v] : doc.items()) {
      if (!known.contains(key)) fail(ErrorKind::kConfig, "policy config: unknown field '" + key + "'");
    }
    c.kind = parse_policy_kind(doc.at("kind").get<std::string>());
    if (doc.contains("alpha")) c.alpha = doc["alpha"].get<double>();
    if (doc.contains("duration_hours")) c.duration_hours = doc["duration_hours"].get<double>();
    if (doc.contains("solver")) {
      const json& s = doc["solver"];
      if (!s.is_object()) fail(ErrorKind::kConfig, "policy config: solver must be an object");
      for (const auto& [key, v] : s.items()) {
        if (!solver_known.contains(key)) fail(ErrorKind::kConfig, "policy config: unknown solver field '" + key + "'");
      }
      if (s.contains("tie_break") && s["tie_break"].get<std::string>() != "fewest_activations_then_server_id") {
        fail(ErrorKind::kConfig, "policy config: unsupported tie_break rule");
      }
      c.solver.time_limit_s = s.value("time_limit_s", c.solver.time_limit_s);
      c.solver.optimality_gap = s.value("optimality_gap", c.solver.optimality_gap);
      c.solver.exact_threshold = s.value("exact_threshold", c.solver.exact_threshold);
      c.solver.max_nodes = s.value("max_nodes", c.solver.max_nodes);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("policy config: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const PolicyConfig& config) {
  json doc = {{"kind", to_string(config.kind)},
              {"duration_hours", config.duration_hours},
              {"solver",
               {{"time_limit_s", config.solver.time_limit_s},
                {"optimality_gap", config.solver.optimality_gap},
                {"exact_threshold", config.solver.exact_threshold},
                {"max_nodes", config.solver.max_nodes},
                {"tie_break", "fewest_activations_then_server_id"}}}};
  if (config.alpha) doc["alpha"] = *config.alpha;
  return doc;
}

json to_json(const SolveResult& result) {
  json doc = {{"status", to_string(result.status)},
              {"objective_value", result.objective_value},
              {"lower_bound", result.lower_bound},
              {"solve_time_ms", result.solve_time_ms},
              {"nodes", result.nodes},
              {"plan", result.plan ? to_json(*result.plan) : json(nullptr)},
              {"unplaceable", result.unplaceable}};
  if (result.normalization) {
    doc["normalization"] = {{"energy_min", result.normalization->energy_min},
                            {"energy_range", result.normalization->energy_range},
                            {"emission_min", result.normalization->emission_min},
                            {"emission_range", result.normalization->emission_range}};
  }
  return doc;
}

CandidateSets prune_feasible(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                             const Topology& topology) {
  std::set<std::string_view> ids;
  for (const auto& s : servers) {
    if (!ids.insert(s.server_id).second) fail(ErrorKind::kValidation, "duplicate server id " + s.server_id);
  }
  CandidateSets out;
  out.servers.resize(apps.size());
  out.rtt_ms.resize(apps.size());
  for (std::size_t i = 0; i < apps.size(); ++i) {
    for (std::size_t s = 0; s < servers.size(); ++s) {
      if (apps[i].row_for(servers[s]) == nullptr) continue;
      const double rtt = latency_of(apps[i], servers[s], topology);
      if (rtt <= apps[i].latency_limit_ms) {
        out.servers[i].push_back(s);
        out.rtt_ms[i].push_back(rtt);
      }
    }
    if (out.servers[i].empty()) out.flagged.push_back(apps[i].app_id);
  }
  return out;
}

SolveResult solve_carbon_optimal(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                                 const Topology& topology, const IntensityForecasts& forecasts,
                                 const PolicyConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const CandidateSets cands = prune_feasible(apps, servers, topology);
  if (!cands.all_placeable()) return infeasible_result(cands, start);
  const double d = config.duration_hours;
  const Instance inst = build_instance(
      apps, servers, cands, topology, forecasts,
      [d](const ProfileRow& row, const ServerState&, double intensity) {
        return row.energy_kwh_per_hour * d * intensity;
      },
      [d](const ServerState& s, double intensity) { return s.base_power_kwh_per_h * d * intensity; });
  std::vector<std::vector<std::uint32_t>> seeds;
  if (apps.size() > config.solver.exact_threshold) {
    seeds = baseline_seeds(inst, apps, servers, cands, topology, forecasts);
  }
  return run_solver(inst, apps, servers, topology, forecasts, config, seeds, start);
}

SolveResult solve_tradeoff(std::span<const ApplicationRequest> apps, std::span<const ServerState> servers,
                           const Topology& topology, const IntensityForecasts& forecasts, double alpha,
                           const PolicyConfig& config) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::kConfig, "alpha must lie in [0, 1]");
  const auto start = std::chrono::steady_clock::now();
  const CandidateSets cands = prune_feasible(apps, servers, topology);
  if (!cands.all_placeable()) return infeasible_result(cands, start);
  const double d = config.duration_hours;

  Normalization norm;
  double pmin = kInf, pmax = -kInf, fmin = kInf, fmax = -kInf;
  for (std::size_t i = 0; i < apps.size(); ++i) {
    for (auto s : cands.servers[i]) {
      const ProfileRow& row = *apps[i].row_for(servers[s]);
      const double p = row.energy_kwh_per_hour * d;
      const double f = p * forecasts.mean(topology.zone_of(servers[s].dc_id));
      pmin = std::min(pmin, p);
      pmax = std::max(pmax, p);
      fmin = std::min(fmin, f);
      fmax = std::max(fmax, f);
    }
  }
  if (pmin != kInf) {
    norm.energy_min = pmin;
    norm.energy_range = pmax > pmin ? pmax - pmin : 1.0;
    norm.emission_min = fmin;
    norm.emission_range = fmax > fmin ? fmax - fmin : 1.0;
  }

  const Instance inst = build_instance(
      apps, servers, cands, topology, forecasts,
      [&](const ProfileRow& row, const ServerState&, double intensity) {
        const double p = row.energy_kwh_per_hour * d;
        const double f = p * intensity;
        return alpha * ((p - norm.energy_min) / norm.energy_range) +
               (1.0 - alpha) * ((f - norm.emission_min) / norm.emission_range);
      },
      [&](const ServerState& s, double intensity) {
        const double pa = s.base_power_kwh_per_h * d;
        return alpha * (pa / norm.energy_range) + (1.0 - alpha) * (pa * intensity / norm.emission_range);
      });
  std::vector<std::vector<std::uint32_t>> seeds;
  if (apps.size() > config.solver.exact_threshold) {
    seeds = baseline_seeds(inst, apps, servers, cands, topology, forecasts);
  }
  SolveResult r = run_solver(inst, apps, servers, topology, forecasts, config, seeds, start);
  r.normalization = norm;
  return r;
}

SolveResult solve_baseline(PolicyKind kind, std::span<const ApplicationRequest> apps,
                           std::span<const ServerState> servers, const Topology& topology,
                           const IntensityForecasts& forecasts, const PolicyConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const CandidateSets cands = prune_feasible(apps, servers, topology);
  if (!cands.all_placeable()) return infeasible_result(cands, start);
  const double d = config.duration_hours;

  if (kind == PolicyKind::kEnergyAware) {
    const Instance inst = build_instance(
        apps, servers, cands, topology, forecasts,
        [d](const ProfileRow& row, const ServerState&, double) { return row.energy_kwh_per_hour * d; },
        [d](const ServerState& s, double) { return s.base_power_kwh_per_h * d; });
    return run_solver(inst, apps, servers, topology, forecasts, config, {}, start);
  }
  if (kind != PolicyKind::kLatencyAware && kind != PolicyKind::kIntensityAware) {
    fail(ErrorKind::kPrecondition, "solve_baseline called with non-baseline policy " + std::string(to_string(kind)));
  }

  SolveResult r;
  const auto chosen = greedy_baseline(kind, apps, servers, cands, topology, forecasts);
  if (chosen) {
    PlacementPlan plan = make_plan(apps, servers, *chosen);
    annotate(plan, apps, servers, topology, forecasts, d);
    r.objective_value = plan.operation_emissions_g + plan.activation_emissions_g;
    r.lower_bound = r.objective_value;
    r.plan = std::move(plan);
    r.status = SolveStatus::kOptimal;
  } else {
    r.status = SolveStatus::kInfeasible;
  }
  r.solve_time_ms = elapsed_ms(start);
  return r;
}

SolveResult solve_policy(const PolicyConfig& config, std::span<const ApplicationRequest> apps,
                         std::span<const ServerState> servers, const Topology& topology,
                         const IntensityForecasts& forecasts) {
  switch (config.kind) {
    case PolicyKind::kCarbonEdge:
      return solve_carbon_optimal(apps, servers, topology, forecasts, config);
    case PolicyKind::kTradeoff:
      if (!config.alpha) fail(ErrorKind::kConfig, "tradeoff policy requires alpha");
      return solve_tradeoff(apps, servers, topology, forecasts, *config.alpha, config);
    default:
      return solve_baseline(config.kind, apps, servers, topology, forecasts, config);
  }
}

}  // namespace carbonedge
