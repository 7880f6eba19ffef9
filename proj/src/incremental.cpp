#include "carbonedge/incremental.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "carbonedge/error.hpp"

namespace carbonedge {

using nlohmann::json;

ClusterState::ClusterState(std::vector<ServerState> servers) : servers_(std::move(servers)) {
  std::set<std::string_view> ids;
  for (const auto& s : servers_) {
    validate(s);
    if (!ids.insert(s.server_id).second) fail(ErrorKind::kValidation, "duplicate server id " + s.server_id);
    initial_.push_back(s.capacities);
  }
}

std::size_t ClusterState::index_of(std::string_view server_id) const {
  for (std::size_t i = 0; i < servers_.size(); ++i) {
    if (servers_[i].server_id == server_id) return i;
  }
  fail(ErrorKind::kData, "unknown server " + std::string(server_id));
}

const ServerState& ClusterState::server(std::string_view server_id) const { return servers_[index_of(server_id)]; }

const Resources& ClusterState::initial_capacity(std::string_view server_id) const {
  return initial_[index_of(server_id)];
}

void ClusterState::check_invariants() const {
  std::map<std::string, Resources> load;
  for (const auto& [app, c] : committed_) {
    const auto& s = server(c.server_id);
    if (!s.powered_on) fail(ErrorKind::kPrecondition, "app " + app + " sits on powered-off server " + s.server_id);
    for (const auto& [dim, q] : c.demand) load[c.server_id][dim] += q;
  }
  for (std::size_t i = 0; i < servers_.size(); ++i) {
    const auto& s = servers_[i];
    std::set<std::string> dims;
    for (const auto& [dim, v] : s.capacities) dims.insert(dim);
    for (const auto& [dim, v] : initial_[i]) dims.insert(dim);
    for (const auto& dim : dims) {
      auto get = [&](const Resources& r) {
        auto it = r.find(dim);
        return it == r.end() ? 0.0 : it->second;
      };
      const double remaining = get(s.capacities);
      const double expected = get(initial_[i]) - get(load[s.server_id]);
      const double tol = 1e-9 * std::max(1.0, std::abs(get(initial_[i])));
      if (std::abs(remaining - expected) > tol) {
        fail(ErrorKind::kPrecondition, "server " + s.server_id + ": remaining " + dim + " does not match commits");
      }
      if (remaining < -tol) fail(ErrorKind::kPrecondition, "server " + s.server_id + ": negative remaining " + dim);
    }
  }
}

ClusterState commit(const ClusterState& state, const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                    const Topology& topology) {
  for (const auto& app : apps) {
    if (state.is_committed(app.app_id)) {
      fail(ErrorKind::kPrecondition, "commit refused: app " + app.app_id + " is already committed");
    }
  }
  const auto violations = check_feasible(plan, apps, state.servers(), topology);
  if (!violations.empty()) {
    const auto& v = violations.front();
    fail(ErrorKind::kPrecondition, "commit refused: " + std::string(to_string(v.constraint)) + " violation (" +
                                       v.message + ") app '" + v.app_id + "' server '" + v.server_id + "'");
  }

  ClusterState next = state;
  for (auto& s : next.servers_) {
    auto it = plan.power_on.find(s.server_id);
    if (it != plan.power_on.end() && it->second) s.powered_on = true;
  }
  for (const auto& app : apps) {
    const std::string& server_id = plan.assignments.at(app.app_id);
    auto& s = next.servers_[next.index_of(server_id)];
    const ProfileRow& row = *app.row_for(s);
    for (const auto& [dim, q] : row.demands) s.capacities[dim] -= q;
    s.powered_on = true;
    next.committed_.emplace(app.app_id, CommittedApp{server_id, row.demands, row.energy_kwh_per_hour});
  }
  ++next.round_;
  return next;
}

ClusterState release(const ClusterState& state, std::string_view app_id) {
  auto it = state.committed_.find(std::string(app_id));
  if (it == state.committed_.end()) {
    fail(ErrorKind::kPrecondition, "cannot release app " + std::string(app_id) + ": not committed");
  }
  ClusterState next = state;
  const std::size_t idx = next.index_of(it->second.server_id);
  auto& s = next.servers_[idx];
  for (const auto& [dim, q] : it->second.demand) s.capacities[dim] += q;
  next.committed_.erase(std::string(app_id));
  return next;
}

json to_json(const BatchRound& round) {
  json batch = json::array();
  for (const auto& app : round.batch) batch.push_back(to_json(app));
  json rejected = json::array();
  for (const auto& r : round.rejected) rejected.push_back({{"app_id", r.app_id}, {"reason", r.reason}});
  return {{"round", round.round_index},
          {"released_before", round.released_before},
          {"batch", batch},
          {"plan", to_json(round.plan)},
          {"rejected", rejected},
          {"status", to_string(round.status)},
          {"objective_value", round.objective_value}};
}

BatchRound batch_round_from_json(const json& doc) {
  BatchRound round;
  try {
    round.round_index = doc.at("round").get<std::size_t>();
    round.released_before = doc.value("released_before", std::vector<std::string>{});
    for (const auto& app : doc.at("batch")) round.batch.push_back(request_from_json(app));
    round.plan = plan_from_json(doc.at("plan"));
    for (const auto& r : doc.at("rejected")) {
      round.rejected.push_back({r.at("app_id").get<std::string>(), r.at("reason").get<std::string>()});
    }
    round.status = parse_solve_status(doc.at("status").get<std::string>());
    round.objective_value = doc.value("objective_value", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("batch round JSON: ") + e.what());
  }
  return round;
}

namespace {

// min over candidate servers of sum_k demand_k / initial capacity_k
double min_footprint(const ApplicationRequest& app, const ClusterState& state, std::span<const std::size_t> cands) {
  double best = std::numeric_limits<double>::infinity();
  for (auto s : cands) {
    const ServerState& server = state.servers()[s];
    const Resources& init = state.initial_capacity(server.server_id);
    double total = 0.0;
    for (const auto& [dim, q] : app.row_for(server)->demands) {
      auto it = init.find(dim);
      const double cap = it == init.end() ? 0.0 : it->second;
      if (q == 0.0) continue;
      total += cap > 0.0 ? q / cap : std::numeric_limits<double>::infinity();
    }
    best = std::min(best, total);
  }
  return best;
}

}  // namespace

std::pair<BatchRound, ClusterState> place_batch(const ClusterState& state, std::span<const ApplicationRequest> batch,
                                                const Topology& topology, const IntensityForecasts& forecasts,
                                                const PolicyConfig& policy) {
  if (batch.empty()) fail(ErrorKind::kPrecondition, "place_batch needs a non-empty batch");
  std::set<std::string_view> ids;
  for (const auto& app : batch) {
    if (!ids.insert(app.app_id).second) fail(ErrorKind::kPrecondition, "app " + app.app_id + " repeats in the batch");
    if (state.is_committed(app.app_id)) {
      fail(ErrorKind::kPrecondition, "app " + app.app_id + " was committed in an earlier round");
    }
  }

  BatchRound round;
  round.round_index = state.round();
  round.batch.assign(batch.begin(), batch.end());

  const CandidateSets cands = prune_feasible(batch, state.servers(), topology);
  std::vector<std::size_t> active;  // indices into batch still to place
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (cands.servers[i].empty()) {
      round.rejected.push_back({batch[i].app_id, "no server within the latency limit"});
    } else {
      active.push_back(i);
    }
  }

  while (!active.empty()) {
    std::vector<ApplicationRequest> apps;
    for (auto i : active) apps.push_back(batch[i]);
    SolveResult result = solve_policy(policy, apps, state.servers(), topology, forecasts);
    if (result.plan) {
      round.plan = std::move(*result.plan);
      round.status = result.status;
      round.objective_value = result.objective_value;
      ClusterState next = commit(state, round.plan, apps, topology);
      return {std::move(round), std::move(next)};
    }
    std::size_t drop = 0;
    double worst = -1.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const double f = min_footprint(batch[active[a]], state, cands.servers[active[a]]);
      if (f >= worst) {
        worst = f;
        drop = a;
      }
    }
    round.rejected.push_back({batch[active[drop]].app_id, "insufficient capacity within the latency limit"});
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop));
  }

  round.status = SolveStatus::kInfeasible;
  for (const auto& s : state.servers()) round.plan.power_on[s.server_id] = s.powered_on;
  ClusterState next = commit(state, round.plan, {}, topology);
  return {std::move(round), std::move(next)};
}

void append_round(std::ostream& out, const BatchRound& round) { out << to_json(round).dump() << '\n'; }

std::vector<BatchRound> read_rounds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kParse, "cannot open " + path.string());
  std::vector<BatchRound> rounds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rounds.push_back(batch_round_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::kParse, path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rounds;
}

ClusterState replay(const ClusterState& initial, std::span<const BatchRound> rounds, const Topology& topology) {
  ClusterState state = initial;
  for (const auto& round : rounds) {
    for (const auto& app_id : round.released_before) state = release(state, app_id);
    std::set<std::string> rejected;
    for (const auto& r : round.rejected) rejected.insert(r.app_id);
    std::vector<ApplicationRequest> placed;
    for (const auto& app : round.batch) {
      if (!rejected.contains(app.app_id)) placed.push_back(app);
    }
    state = commit(state, round.plan, placed, topology);
  }
  return state;
}

}  // namespace carbonedge
