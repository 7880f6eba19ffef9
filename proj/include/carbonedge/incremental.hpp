#pragma once

// Batch-by-batch placement against a cluster whose capacity and power state
// carry over between rounds.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "carbonedge/model.hpp"
#include "carbonedge/policies.hpp"

namespace carbonedge {

struct CommittedApp {
  std::string server_id;
  Resources demand;
  double energy_kwh_per_hour = 0.0;

  friend bool operator==(const CommittedApp&, const CommittedApp&) = default;
};

class ClusterState {
 public:
  ClusterState() = default;
  // Capacities of `servers` become the initial capacities. Throws
  // Error(kValidation) on an invalid server or duplicate id.
  explicit ClusterState(std::vector<ServerState> servers);

  // Servers with remaining capacities and current power states, in the order
  // given at construction.
  const std::vector<ServerState>& servers() const { return servers_; }
  const ServerState& server(std::string_view server_id) const;
  const Resources& initial_capacity(std::string_view server_id) const;

  const std::map<std::string, CommittedApp>& committed() const { return committed_; }
  bool is_committed(std::string_view app_id) const { return committed_.find(std::string(app_id)) != committed_.end(); }
  std::size_t round() const { return round_; }

  // Throws Error(kPrecondition) if remaining != initial - committed demand
  // in some dimension, a remaining capacity is negative, or a committed app
  // sits on a powered-off server.
  void check_invariants() const;

  friend bool operator==(const ClusterState&, const ClusterState&) = default;

 private:
  friend ClusterState commit(const ClusterState&, const PlacementPlan&, std::span<const ApplicationRequest>,
                             const Topology&);
  friend ClusterState release(const ClusterState&, std::string_view);

  std::size_t index_of(std::string_view server_id) const;

  std::vector<ServerState> servers_;
  std::vector<Resources> initial_;
  std::map<std::string, CommittedApp> committed_;
  std::size_t round_ = 0;
};

// Applies a plan for `apps`: capacities shrink by the demands and targeted or
// requested servers power on. Refuses (Error(kPrecondition), input untouched)
// plans that fail check_feasible against the state or that contain an app
// already committed. The round counter advances by one.
ClusterState commit(const ClusterState& state, const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                    const Topology& topology);

// Frees the capacity of a finished app. The server stays powered on.
// Throws Error(kPrecondition) for an app that is not committed.
ClusterState release(const ClusterState& state, std::string_view app_id);

struct Rejection {
  std::string app_id;
  std::string reason;
};

struct BatchRound {
  std::size_t round_index = 0;
  // Apps whose lifetime ended since the previous round; released before placing.
  std::vector<std::string> released_before;
  std::vector<ApplicationRequest> batch;
  PlacementPlan plan;  // covers batch minus rejected
  std::vector<Rejection> rejected;
  SolveStatus status = SolveStatus::kOptimal;  // of the final solve
  double objective_value = 0.0;
};

nlohmann::json to_json(const BatchRound& round);
BatchRound batch_round_from_json(const nlohmann::json& doc);

// Prunes servers by latency, solves the batch with `policy` and commits the
// result. Apps with no latency-feasible server are rejected up front; when the
// remaining batch has no solution, the app with the largest minimum resource
// footprint (demand over initial capacity, summed over dimensions; the later
// app on ties) is rejected and the rest re-solved. Throws
// Error(kPrecondition) for an empty batch or an app id that repeats within the
// batch or was committed earlier.
std::pair<BatchRound, ClusterState> place_batch(const ClusterState& state, std::span<const ApplicationRequest> batch,
                                                const Topology& topology, const IntensityForecasts& forecasts,
                                                const PolicyConfig& policy);

// One JSON document per line.
void append_round(std::ostream& out, const BatchRound& round);
std::vector<BatchRound> read_rounds(const std::filesystem::path& path);

// Re-applies every round onto `initial`, in order: releases, then the plan.
ClusterState replay(const ClusterState& initial, std::span<const BatchRound> rounds, const Topology& topology);

}  // namespace carbonedge
