// Runs the eight acceptance criteria and prints one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "carbonedge/analysis.hpp"
#include "carbonedge/fixtures.hpp"
#include "carbonedge/policies.hpp"
#include "carbonedge/sim.hpp"
#include "cli.hpp"
#include "../support/ledger.hpp"
#include "../support/oracle.hpp"
#include "../support/scale_instance.hpp"

using namespace carbonedge;
using carbonedge::testing::enumerate;
using carbonedge::testing::OracleObjective;
using carbonedge::testing::random_world;
using carbonedge::testing::World;
using carbonedge::testing::WorldShape;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  // Records the first failure only; later ones rarely add information.
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

PolicyConfig policy(PolicyKind kind) {
  PolicyConfig c;
  c.kind = kind;
  if (kind == PolicyKind::kTradeoff) c.alpha = 0.5;
  return c;
}

WorldShape small_shape(Rng& rng) {
  WorldShape s;
  s.apps = 1 + rng.index(4);
  s.servers = 1 + rng.index(4);
  s.dims = 1 + rng.index(2);
  return s;
}

Dataset dataset_from(const SyntheticWorld& w) {
  Dataset d;
  d.carbon = w.carbon;
  d.latency = std::make_unique<LatencyMatrix>(w.latency);
  d.cities = w.cities;
  d.dcs = w.dcs;
  d.profiles = synthetic_profiles();
  return d;
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

Verdict ac1_oracle_optimality() {
  Verdict v;
  Rng rng(1);
  std::size_t feasible = 0;
  const auto t0 = Clock::now();
  std::size_t infeasible = 0;
  // Infeasible draws must agree too but do not count toward the 500.
  for (int t = 0; feasible < 500; ++t) {
    const World w = random_world(rng, small_shape(rng));
    const auto oracle = enumerate(w, OracleObjective::kCarbon);
    const auto r = solve_carbon_optimal(w.apps, w.servers, w.topology(), w.forecasts, policy(PolicyKind::kCarbonEdge));
    if (!oracle.feasible) {
      if (r.status != SolveStatus::kInfeasible) v.fail("instance " + std::to_string(t) + ": solver found a plan");
      ++infeasible;
      continue;
    }
    ++feasible;
    if (r.status != SolveStatus::kOptimal || r.objective_value != oracle.value) {
      v.fail(fmt("instance %.0f: objective %.17g vs oracle %.17g", t, r.objective_value, oracle.value));
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= 10.0) v.fail(fmt("took %.2f s", secs));
  if (v.pass) v.detail = fmt("500 feasible instances exact, %.0f infeasible agree, %.2f s", static_cast<double>(infeasible), secs);
  return v;
}

struct SimStats {
  std::size_t runs = 0;
  std::size_t dominance_violations = 0;
  std::size_t slo_violations = 0;
  std::size_t committed = 0;
  double min_savings = std::numeric_limits<double>::infinity();
  double max_savings = -std::numeric_limits<double>::infinity();
};

// Every policy on every (seed, latency limit) pair of the fixture grid.
SimStats simulate_fixtures() {
  SimStats s;
  std::vector<PolicyConfig> policies{policy(PolicyKind::kCarbonEdge), policy(PolicyKind::kEnergyAware),
                                     policy(PolicyKind::kIntensityAware)};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GeneratorConfig g;
    g.hours = 24 * 3;
    const Dataset data = dataset_from(generate_synthetic_traces(g, seed));
    for (double limit : {10.0, 20.0, 40.0}) {
      ScenarioConfig c = default_scenario(g, seed);
      c.latency_limit_ms = limit;
      const auto rows = compare_policies(c, data, policies, jobs());
      const double best = rows[1].report.emissions_g;
      for (const auto& r : rows) {
        ++s.runs;
        if (best > r.report.emissions_g) ++s.dominance_violations;
        s.slo_violations += r.report.slo_violations;
        s.committed += r.report.placed;
      }
      s.min_savings = std::min(s.min_savings, rows[1].savings_pct);
      s.max_savings = std::max(s.max_savings, rows[1].savings_pct);

      // Independent check of the SLO on the placement log itself.
      c.policy = policies[0];
      for (const auto& p : run_scenario(c, data).placements) {
        if (p.rtt_ms > c.latency_limit_ms) ++s.slo_violations;
      }
    }
  }
  return s;
}

Verdict ac2_dominance(const SimStats& s) {
  Verdict v;
  if (s.dominance_violations != 0) v.fail(std::to_string(s.dominance_violations) + " dominance violations");
  if (v.pass) {
    v.detail = std::to_string(s.runs) + " runs, 0 violations, carbon_edge savings " +
               fmt("%.1f%% to %.1f%% vs latency_aware", s.min_savings, s.max_savings);
  }
  return v;
}

Verdict ac3_latency_slo(const SimStats& s) {
  Verdict v;
  if (s.slo_violations != 0) v.fail(std::to_string(s.slo_violations) + " committed apps over their limit");
  if (v.pass) v.detail = std::to_string(s.committed) + " committed apps, none over the limit";
  return v;
}

std::vector<std::string> assignments(const SolveResult& r, const World& w) {
  std::vector<std::string> out;
  for (const auto& a : w.apps) out.push_back(r.plan ? r.plan->assignments.at(a.app_id) : "");
  return out;
}

Verdict ac4_tradeoff() {
  Verdict v;
  Rng rng(4);
  std::size_t compared = 0;
  // Infeasible draws are skipped until 100 feasible instances were compared.
  for (int t = 0; compared < 100; ++t) {
    const World w = random_world(rng, small_shape(rng));
    const auto carbon = solve_carbon_optimal(w.apps, w.servers, w.topology(), w.forecasts, policy(PolicyKind::kCarbonEdge));
    const auto energy = solve_baseline(PolicyKind::kEnergyAware, w.apps, w.servers, w.topology(), w.forecasts,
                                       policy(PolicyKind::kEnergyAware));
    const auto t0 = solve_tradeoff(w.apps, w.servers, w.topology(), w.forecasts, 0.0, policy(PolicyKind::kTradeoff));
    const auto t1 = solve_tradeoff(w.apps, w.servers, w.topology(), w.forecasts, 1.0, policy(PolicyKind::kTradeoff));
    if (!carbon.plan) continue;
    ++compared;
    if (assignments(t0, w) != assignments(carbon, w)) v.fail("alpha 0 differs from carbon optimal, instance " + std::to_string(t));
    if (assignments(t1, w) != assignments(energy, w)) v.fail("alpha 1 differs from energy aware, instance " + std::to_string(t));

    double prev_e = -std::numeric_limits<double>::infinity();
    double prev_p = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 10; ++k) {
      const double alpha = k / 10.0;
      const auto oracle = enumerate(w, OracleObjective::kTradeoff, alpha);
      const auto r = solve_tradeoff(w.apps, w.servers, w.topology(), w.forecasts, alpha, policy(PolicyKind::kTradeoff));
      if (assignments(r, w) != oracle.server_of_app) {
        v.fail(fmt("instance %.0f alpha %.1f: solver and enumeration disagree", t, alpha));
      }
      if (oracle.emissions < prev_e || oracle.energy > prev_p) {
        v.fail(fmt("instance %.0f alpha %.1f: emissions/energy not monotone", t, alpha));
      }
      prev_e = oracle.emissions;
      prev_p = oracle.energy;
    }
  }
  if (v.pass) v.detail = std::to_string(compared) + " feasible instances, endpoints match, 11-point grid monotone";
  return v;
}

Verdict ac5_mesoscale() {
  Verdict v;
  Rng rng(5);
  RadiusStudyConfig cfg;
  cfg.radii_km = {25, 50, 100, 200, 350, 500, 750, 1000, 2000};
  for (int t = 0; t < 200; ++t) {
    GeneratorConfig g;
    g.hours = 24;
    g.dcs = 2 + rng.index(60);
    g.zones = 1 + rng.index(12);
    const SyntheticWorld world = generate_synthetic_traces(g, rng.next());
    const auto studies = run_radius_study(cfg, world.dcs, world.carbon, world.latency);
    std::map<std::string, double> prev;
    std::map<double, double> prev_frac;
    for (const auto& s : studies) {
      for (const auto& d : s.diffs) {
        if (d.pct_diff < prev[d.dc_id]) v.fail(fmt("geography %.0f: a difference shrank at %.0f km", t, s.radius_km));
        prev[d.dc_id] = d.pct_diff;
      }
      for (double threshold : {10.0, 20.0, 25.0, 50.0}) {
        const double frac = fraction_exceeding(s.diffs, threshold);
        if (frac < prev_frac[threshold]) v.fail(fmt("geography %.0f: exceedance shrank at %.0f km", t, s.radius_km));
        prev_frac[threshold] = frac;
      }
    }
  }
  if (v.pass) v.detail = "200 geographies, 9 radii, differences and exceedance non-decreasing";
  return v;
}

double peak_rss_mb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return static_cast<double>(u.ru_maxrss) / 1024.0;
}

Verdict ac6_scalability() {
  Verdict v;
  PolicyConfig c = policy(PolicyKind::kCarbonEdge);
  c.solver.time_limit_s = 2.5;
  c.solver.optimality_gap = 0.01;
  double worst_time = 0.0, worst_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = testing::make_scale_instance(seed);
    const auto t0 = Clock::now();
    const auto r = solve_carbon_optimal(inst->apps, inst->servers, *inst->topo, inst->forecasts, c);
    const double secs = seconds_since(t0);
    worst_time = std::max(worst_time, secs);
    const double gap = r.objective_value > 0 ? (r.objective_value - r.lower_bound) / r.objective_value : 0.0;
    if (r.status != SolveStatus::kOptimal) worst_gap = std::max(worst_gap, gap);
    if (secs > 3.0) v.fail(fmt("seed %.0f took %.2f s", static_cast<double>(seed), secs));
    if (r.status != SolveStatus::kOptimal && !(r.status == SolveStatus::kFeasibleGap && gap <= 0.01)) {
      v.fail(fmt("seed %.0f ended with gap %.4f%% (", static_cast<double>(seed), gap * 100) +
             std::string(to_string(r.status)) + ")");
    }
    if (!r.plan || r.plan->assignments.size() != inst->apps.size()) {
      v.fail("seed " + std::to_string(seed) + " did not place every app");
    }
  }
  const double rss = peak_rss_mb();
  if (rss > 200.0) v.fail(fmt("peak RSS %.1f MB", rss));
  if (v.pass) {
    v.detail = fmt("140 apps x 400 servers, seeds 1-5: worst %.2f s, worst gap %.3f%%, peak RSS %.1f MB", worst_time,
                   worst_gap * 100, rss);
  }
  return v;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

Verdict ac7_identities() {
  Verdict v;
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    WorldShape shape = small_shape(rng);
    shape.dyadic = false;
    const World w = random_world(rng, shape);
    const auto r = solve_baseline(PolicyKind::kLatencyAware, w.apps, w.servers, w.topology(), w.forecasts,
                                  policy(PolicyKind::kLatencyAware));
    if (!r.plan) continue;
    const double d = rng.uniform(0.1, 24.0), k = rng.uniform(0.1, 5.0);
    const auto one = plan_emissions(*r.plan, w.apps, w.servers, w.topology(), w.forecasts, 1.0);
    const auto dur = plan_emissions(*r.plan, w.apps, w.servers, w.topology(), w.forecasts, d);
    const auto scaled = plan_emissions(*r.plan, w.apps, w.servers, w.topology(), w.forecasts.scaled(k), 1.0);
    const auto zero = plan_emissions(*r.plan, w.apps, w.servers, w.topology(), w.forecasts.scaled(0.0), d);
    if (!close(dur.total(), d * one.total()) || !close(scaled.total(), k * one.total())) {
      v.fail(fmt("instance %.0f: emissions not linear", t));
    }
    if (zero.total() != 0.0) v.fail(fmt("instance %.0f: zero intensity gave %.3g g", t, zero.total()));
  }

  std::size_t hours = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    GeneratorConfig g;
    g.hours = 24 * 3;
    const Dataset data = dataset_from(generate_synthetic_traces(g, seed));
    ScenarioConfig c = default_scenario(g, seed);
    c.initially_on = 0.25;
    c.lifetime = {LifetimeKind::kFixed, 5.5};
    for (auto kind : {PolicyKind::kCarbonEdge, PolicyKind::kLatencyAware, PolicyKind::kEnergyAware,
                      PolicyKind::kIntensityAware}) {
      c.policy = policy(kind);
      const RunResult run = run_scenario(c, data);
      const auto ledger = testing::ledger(run, data, c);
      double total = 0.0;
      for (std::size_t h = 0; h < ledger.size(); ++h) {
        total += ledger[h];
        if (!close(run.report.intervals[h].emissions_g(), ledger[h])) {
          v.fail(fmt("seed %.0f hour %.0f: interval differs from the log", static_cast<double>(seed), h));
        }
      }
      if (!close(run.report.emissions_g, total)) v.fail(fmt("seed %.0f: total differs from the log", static_cast<double>(seed)));
      hours += ledger.size();
    }
  }
  if (v.pass) v.detail = "linearity and zero intensity on 300 plans; " + std::to_string(hours) + " simulated hours match the logs to 1e-9";
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  return cli::run(args, out, err);
}

// Compares every file below two directories byte for byte.
bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::vector<fs::path> left;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) left.push_back(fs::relative(e.path(), a));
  }
  std::size_t right = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) right += e.is_regular_file() ? 1 : 0;
  if (left.size() != right) return false;
  for (const auto& rel : left) {
    if (slurp(a / rel) != slurp(b / rel)) return false;
  }
  files += left.size();
  return true;
}

Verdict ac8_determinism() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "carbonedge_acceptance";
  fs::remove_all(root);
  std::size_t files = 0;
  const std::vector<std::string> fixture_args{"fixtures", "--dcs", "10", "--zones", "4", "--hours", "72"};
  for (const char* side : {"a", "b"}) {
    std::vector<std::string> args{"--out-dir", (root / side / "data").string(), "--seed", "3"};
    args.insert(args.end(), fixture_args.begin(), fixture_args.end());
    if (cli(args) != 0) v.fail("fixtures failed");
  }
  if (!same_tree(root / "a" / "data", root / "b" / "data", files)) v.fail("fixtures differ");

  const std::string data = (root / "a" / "data").string();
  const std::string scenario = (root / "a" / "data" / "scenario.json").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"analyze", {"analyze"}},
      {"run", {"run", scenario}},
      {"compare", {"--jobs", "2", "compare", scenario}},
      {"sweep", {"sweep", scenario, "--dimension", "alpha", "--values", "0,0.5,1"}},
  };
  for (const auto& [name, tail] : commands) {
    for (const char* side : {"a", "b"}) {
      std::vector<std::string> args{"--data-dir", data, "--out-dir", (root / side / name).string()};
      args.insert(args.end(), tail.begin(), tail.end());
      const int code = cli(args);
      if (code != 0 && code != 3) v.fail(name + " exited with " + std::to_string(code));
    }
    if (!same_tree(root / "a" / name, root / "b" / name, files)) v.fail(name + " artifacts differ");
  }
  if (v.pass) v.detail = "fixtures, analyze, run, compare and sweep: " + std::to_string(files) + " files identical";
  return v;
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const char* name, const std::function<Verdict()>& check) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.fail(std::string("threw: ") + e.what());
    }
    std::printf("%s %s: %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  };

  report("AC1 oracle optimality", ac1_oracle_optimality);
  // AC2 and AC3 share one set of simulations, run inside the AC2 timing.
  SimStats sims;
  report("AC2 dominance", [&] {
    sims = simulate_fixtures();
    return ac2_dominance(sims);
  });
  report("AC3 latency SLO", [&] {
    if (sims.runs == 0) throw std::runtime_error("simulations did not complete");
    return ac3_latency_slo(sims);
  });
  report("AC4 trade-off endpoints", ac4_tradeoff);
  report("AC5 mesoscale monotonicity", ac5_mesoscale);
  report("AC6 scalability", ac6_scalability);
  report("AC7 accounting identities", ac7_identities);
  report("AC8 determinism", ac8_determinism);
  return failed;
}
