#pragma once

// Generic solver for the placement integer program: assign every app to one
// of its options (a server with a per-app cost and demand vector), paying an
// activation cost once for each server that is off and receives an app.
//
//   minimize   sum_i cost(i, s_i) + sum_{j opened} activation_j
//   subject to per-server, per-dimension capacity.
//
// Servers that receive no app are never activated, so the power decision is
// implied by the assignment. Ties in objective value (relative 1e-10) go to
// fewer activations, then to the lexicographically smallest vector of server
// indices in app order; callers that number servers by sorted id therefore get
// the id-lexicographic tie-break.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace carbonedge {

struct SolverOptions {
  double time_limit_s = 10.0;
  double optimality_gap = 0.0;      // relative; 0 demands a proven optimum
  std::size_t exact_threshold = 16;  // batches up to this size get tie-exact search
  std::uint64_t max_nodes = 20'000'000;
};

enum class SolveStatus { kOptimal, kFeasibleGap, kInfeasible, kTimeout };

std::string_view to_string(SolveStatus status);
SolveStatus parse_solve_status(std::string_view text);

struct AssignmentOption {
  std::uint32_t server;
  double cost;
};

struct AssignmentProblem {
  std::size_t num_servers = 0;
  std::size_t num_dims = 0;
  std::vector<double> capacity;         // num_servers x num_dims, row-major
  std::vector<double> activation_cost;  // per server; ignored for powered servers
  std::vector<char> powered;            // per server
  std::vector<std::vector<AssignmentOption>> options;  // per app
  std::vector<std::vector<double>> demands;  // per app: option k uses [k*num_dims, (k+1)*num_dims)

  std::size_t num_apps() const { return options.size(); }
  // Appends an app; `demand` holds num_dims values per option.
  void add_app(std::vector<AssignmentOption> opts, std::vector<double> demand);
};

struct AssignmentSolution {
  std::vector<std::uint32_t> server;  // per app
  double value = 0.0;
  std::size_t activations = 0;
};

struct SolverOutcome {
  SolveStatus status = SolveStatus::kInfeasible;
  std::optional<AssignmentSolution> best;
  double lower_bound = 0.0;
  std::uint64_t nodes = 0;
};

// Objective of a complete assignment, summed in app order and then in server
// order. Returns nullopt if an app is sent to a server it has no option for or
// a capacity is exceeded.
std::optional<AssignmentSolution> evaluate_assignment(const AssignmentProblem& problem,
                                                      std::span<const std::uint32_t> server_of_app);

// True when `a` is preferred over `b` under the tie rule above.
bool better_solution(const AssignmentSolution& a, const AssignmentSolution& b);

// `seeds` are complete assignments used as starting incumbents; infeasible
// seeds are ignored. The returned objective is never worse than any feasible
// seed's.
SolverOutcome solve_assignment(const AssignmentProblem& problem, const SolverOptions& options,
                               std::span<const std::vector<std::uint32_t>> seeds = {});

}  // namespace carbonedge
