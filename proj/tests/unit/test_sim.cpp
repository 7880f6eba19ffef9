#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/fixtures.hpp"
#include "carbonedge/policies.hpp"
#include "carbonedge/sim.hpp"
#include "../support/ledger.hpp"
#include "../support/oracle.hpp"

using namespace carbonedge;

namespace {

Dataset dataset_from(const SyntheticWorld& w) {
  Dataset d;
  d.carbon = w.carbon;
  d.latency = std::make_unique<LatencyMatrix>(w.latency);
  d.cities = w.cities;
  d.dcs = w.dcs;
  d.profiles = synthetic_profiles();
  return d;
}

struct Fixture {
  GeneratorConfig generator;
  ScenarioConfig config;
  Dataset data;
};

Fixture fixture(std::uint64_t seed, std::size_t hours = 24, std::size_t dcs = 10) {
  Fixture f;
  f.generator.hours = 24 * 4;
  f.generator.dcs = dcs;
  f.config = default_scenario(f.generator, seed);
  f.config.end = f.config.start + Hours{static_cast<long>(hours)};
  f.data = dataset_from(generate_synthetic_traces(f.generator, seed));
  return f;
}

// One data center, one server, constant intensity 100.
Dataset single_site(double intensity, std::size_t hours) {
  Dataset d;
  d.carbon.add({"Z", "z"}, CarbonIntensityTrace("Z", parse_utc("2023-01-01T00:00:00Z"),
                                                std::vector<double>(hours, intensity)));
  d.latency = std::make_unique<LatencyMatrix>(std::vector<std::string>{"c"});
  d.cities = {{"c", GeoPoint(40, -80)}};
  d.dcs.add({"d", GeoPoint(40, -80), "c", "Z"});
  WorkloadProfile p;
  p.app_class = "app";
  p.by_device["cpu"] = ProfileRow{{{"slots", 1}}, 0.05, 10};
  d.profiles["app"] = p;
  return d;
}

ScenarioConfig single_site_config(std::size_t hours) {
  ScenarioConfig c;
  c.start = parse_utc("2023-01-01T00:00:00Z");
  c.end = c.start + Hours{static_cast<long>(hours)};
  c.batch_interval_minutes = 60;
  c.arrivals.kind = ArrivalKind::kExplicit;
  c.arrivals.events = {{parse_utc("2023-01-01T00:10:00Z"), "d", "app"}};
  c.device_classes["cpu"] = {{{"slots", 4}}, 0.1};
  c.device_mix = {"cpu"};
  c.workload_mix = {{"app", 1.0, {}}};
  return c;
}

bool close(double a, double b, double rel = 1e-9) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(b)); }

template <class Fn>
ErrorKind kind_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kPrecondition;
}

}  // namespace

TEST_CASE("hand ledger: one app on one freshly activated server") {
  const Dataset data = single_site(100.0, 24);
  const ScenarioConfig c = single_site_config(11);
  const RunResult run = run_scenario(c, data);
  const auto& r = run.report;
  REQUIRE(r.placed == 1);
  CHECK(run.placements[0].start == parse_utc("2023-01-01T01:00:00Z"));
  // 10 h of 0.05 kWh/h at 100 g/kWh, plus 10 h of 0.1 kWh/h base power.
  CHECK(r.operation_g == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(r.base_g == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.emissions_g == doctest::Approx(150.0).epsilon(1e-12));
  CHECK(r.activation_one_shot_g == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(r.activations == 1);
  CHECK(r.intervals[0].emissions_g() == 0.0);
  CHECK(r.intervals[1].emissions_g() == doctest::Approx(15.0));
}

TEST_CASE("a fixed lifetime stops operation but not base power") {
  const Dataset data = single_site(100.0, 24);
  ScenarioConfig c = single_site_config(11);
  c.lifetime = {LifetimeKind::kFixed, 2.5};
  const auto r = run_scenario(c, data).report;
  CHECK(r.operation_g == doctest::Approx(0.05 * 2.5 * 100));
  CHECK(r.base_g == doctest::Approx(100.0));
}

TEST_CASE("zero arrival rate gives an all-zero report") {
  Fixture f = fixture(1);
  f.config.arrivals.rate_per_hour = 0.0;
  const auto r = run_scenario(f.config, f.data).report;
  CHECK(r.arrivals == 0);
  CHECK(r.emissions_g == 0.0);
  CHECK(r.energy_kwh == 0.0);
  for (const auto& iv : r.intervals) CHECK(iv.emissions_g() == 0.0);
}

TEST_CASE("interval emissions equal the log recomputation for every policy") {
  Fixture f = fixture(3);
  f.config.initially_on = 0.34;
  for (auto kind : {PolicyKind::kCarbonEdge, PolicyKind::kLatencyAware, PolicyKind::kEnergyAware,
                    PolicyKind::kIntensityAware}) {
    f.config.policy.kind = kind;
    const RunResult run = run_scenario(f.config, f.data);
    const auto g = testing::ledger(run, f.data, f.config);
    double total = 0.0;
    REQUIRE(g.size() == run.report.intervals.size());
    for (std::size_t h = 0; h < g.size(); ++h) {
      CHECK(close(run.report.intervals[h].emissions_g(), g[h]));
      total += g[h];
    }
    CHECK(close(run.report.emissions_g, total));
    CHECK(run.report.placed > 0);
  }
}

TEST_CASE("interval emissions reproduce plan_emissions hour by hour") {
  Fixture f = fixture(4, 12);
  const RunResult run = run_scenario(f.config, f.data);
  const Topology topo(*f.data.latency, f.data.dcs);
  std::map<std::string, ServerState> servers;
  for (const auto& s : build_servers(f.config, f.data.dcs)) servers[s.server_id] = s;
  for (std::size_t h = 0; h < run.report.intervals.size(); ++h) {
    const TimePoint a = f.config.start + Hours{static_cast<long>(h)};
    IntensityForecasts realized;
    for (const auto& [zone, trace] : f.data.carbon) realized.set({zone, a, 1, trace.at(a)});
    double expected = 0.0;
    for (const auto& p : run.placements) {
      const auto lo = std::max(a, p.start), hi = std::min(a + Hours{1}, p.end);
      if (hi <= lo) continue;
      ApplicationRequest app;
      app.app_id = p.app_id;
      app.origin_dc = p.dc_id;
      app.latency_limit_ms = 1;
      app.server_rows[p.server_id] = ProfileRow{{}, p.energy_kwh_per_hour, 0};
      PlacementPlan plan;
      plan.assignments[p.app_id] = p.server_id;
      ServerState s = servers.at(p.server_id);
      s.powered_on = true;
      std::vector<ApplicationRequest> apps{app};
      std::vector<ServerState> ss{s};
      expected += plan_emissions(plan, apps, ss, topo, realized, hours_between(lo, hi)).operation_g;
    }
    for (const auto& act : run.activations) {
      const auto lo = std::max(a, act.time);
      if (a + Hours{1} <= lo) continue;
      ServerState s = servers.at(act.server_id);
      s.powered_on = false;
      PlacementPlan plan;
      plan.power_on[s.server_id] = true;
      std::vector<ServerState> ss{s};
      expected += plan_emissions(plan, {}, ss, topo, realized, hours_between(lo, a + Hours{1})).activation_g;
    }
    CHECK(close(run.report.intervals[h].emissions_g(), expected));
  }
}

TEST_CASE("runs are deterministic and totals equal interval sums") {
  Fixture f = fixture(5);
  const auto a = run_scenario(f.config, f.data);
  const auto b = run_scenario(f.config, f.data);
  CHECK(to_json(a.report).dump() == to_json(b.report).dump());
  double op = 0, base = 0, kwh = 0;
  std::size_t placed = 0, arrivals = 0;
  for (const auto& iv : a.report.intervals) {
    op += iv.operation_g;
    base += iv.base_g;
    kwh += iv.energy_kwh();
    placed += iv.placed;
    arrivals += iv.arrivals;
  }
  CHECK(close(a.report.operation_g, op));
  CHECK(close(a.report.base_g, base));
  CHECK(close(a.report.energy_kwh, kwh));
  CHECK(placed == a.report.placed);
  CHECK(arrivals == a.report.arrivals);
  CHECK(a.report.placed + a.report.rejected + a.report.unscheduled == a.report.arrivals);
}

TEST_CASE("no committed app ever exceeds its latency limit") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Fixture f = fixture(seed);
    f.config.latency_limit_ms = 8.0;
    for (auto kind : {PolicyKind::kCarbonEdge, PolicyKind::kEnergyAware, PolicyKind::kIntensityAware}) {
      f.config.policy.kind = kind;
      const auto run = run_scenario(f.config, f.data);
      CHECK(run.report.slo_violations == 0);
      for (const auto& p : run.placements) CHECK(p.rtt_ms <= p.latency_limit_ms);
    }
  }
}

TEST_CASE("policies see identical arrival streams") {
  Fixture f = fixture(6);
  f.config.policy.kind = PolicyKind::kCarbonEdge;
  const auto a = run_scenario(f.config, f.data);
  f.config.policy.kind = PolicyKind::kLatencyAware;
  const auto b = run_scenario(f.config, f.data);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t k = 0; k < a.rounds.size(); ++k) {
    REQUIRE(a.rounds[k].batch.size() == b.rounds[k].batch.size());
    for (std::size_t i = 0; i < a.rounds[k].batch.size(); ++i) {
      CHECK(a.rounds[k].batch[i].app_id == b.rounds[k].batch[i].app_id);
      CHECK(a.rounds[k].batch[i].origin_dc == b.rounds[k].batch[i].origin_dc);
    }
  }
}

TEST_CASE("carbon_edge emits no more than any baseline on the fixtures") {
  std::vector<PolicyConfig> policies(3);
  policies[0].kind = PolicyKind::kCarbonEdge;
  policies[1].kind = PolicyKind::kEnergyAware;
  policies[2].kind = PolicyKind::kIntensityAware;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Fixture f = fixture(seed);
    const auto rows = compare_policies(f.config, f.data, policies, 2);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].policy == "latency_aware");
    CHECK(rows[0].savings_pct == 0.0);
    for (const auto& r : rows) CHECK(rows[1].report.emissions_g <= r.report.emissions_g);
    CHECK(rows[1].savings_pct >= 0.0);
  }
}

TEST_CASE("a one-policy comparison degenerates to the run totals") {
  const Fixture f = fixture(2, 12);
  std::vector<PolicyConfig> only(1);
  only[0].kind = PolicyKind::kLatencyAware;
  const auto rows = compare_policies(f.config, f.data, only, 1);
  REQUIRE(rows.size() == 1);
  ScenarioConfig c = f.config;
  c.policy.kind = PolicyKind::kLatencyAware;
  CHECK(rows[0].report.emissions_g == run_scenario(c, f.data).report.emissions_g);
}

TEST_CASE("parallel sweeps match serial ones") {
  const Fixture f = fixture(7, 12);
  const std::vector<double> limits{5, 10, 20, 30};
  const auto serial = sweep(f.config, f.data, SweepDimension::kLatencyLimit, limits, 1);
  const auto parallel = sweep(f.config, f.data, SweepDimension::kLatencyLimit, limits, 3);
  REQUIRE(serial.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(to_json(serial[k].report).dump() == to_json(parallel[k].report).dump());
    CHECK(serial[k].savings_pct == parallel[k].savings_pct);
    CHECK(serial[k].reference.policy == "latency_aware");
  }
}

TEST_CASE("month sweep over a constant-intensity trace gives identical savings") {
  GeneratorConfig g;
  g.hours = 8760;
  g.dcs = 8;
  g.diurnal_amplitude = 0.0;
  g.jitter = 0.0;
  const Dataset data = dataset_from(generate_synthetic_traces(g, 9));
  ScenarioConfig c = default_scenario(g, 9);
  c.end = c.start + Hours{12};
  const std::vector<double> months{1, 4, 7, 10};
  const auto points = sweep(c, data, SweepDimension::kMonth, months, 2);
  for (const auto& p : points) {
    CHECK(p.savings_pct == points[0].savings_pct);
    CHECK(p.report.emissions_g == points[0].report.emissions_g);
  }
  CHECK(points[0].savings_pct > 0.0);
}

TEST_CASE("alpha sweep switches to the trade-off policy") {
  const Fixture f = fixture(8, 6);
  const std::vector<double> alphas{0.0, 1.0};
  const auto points = sweep(f.config, f.data, SweepDimension::kAlpha, alphas, 1);
  CHECK(points[0].report.policy == "tradeoff_0");
  CHECK(points[1].report.policy == "tradeoff_1");
  CHECK(kind_of([&] { apply_sweep_value(f.config, SweepDimension::kMonth, 13); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { sweep(f.config, f.data, SweepDimension::kAlpha, {}, 1); }) == ErrorKind::kConfig);
}

TEST_CASE("enlarging the latency limit never increases the optimal batch emissions") {
  Rng rng(404);
  for (int k = 0; k < 100; ++k) {
    testing::World w = testing::random_world(rng, testing::WorldShape{3, 4, 2, true, 0.3});
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 4; ++step) {
      if (step > 0) {
        for (auto& a : w.apps) a.latency_limit_ms += 5.0;
      }
      const auto best = testing::enumerate(w, testing::OracleObjective::kCarbon);
      if (!best.feasible) continue;
      CHECK(best.value <= prev);
      prev = best.value;
    }
  }
}

TEST_CASE("scenario JSON round-trips and rejects bad input") {
  const Fixture f = fixture(1);
  const auto doc = to_json(f.config);
  CHECK(to_json(scenario_from_json(doc)).dump() == doc.dump());

  auto bad = doc;
  bad["surprise"] = 1;
  CHECK(kind_of([&] { scenario_from_json(bad); }) == ErrorKind::kConfig);
  bad = doc;
  bad["arrivals"] = {{"model", "population"}, {"rate_per_hour", 3}, {"weights", {{"dc-000", 0.5}}}};
  CHECK(kind_of([&] { scenario_from_json(bad); }) == ErrorKind::kConfig);
  bad = doc;
  bad["end"] = doc["start"];
  CHECK(kind_of([&] { scenario_from_json(bad); }) == ErrorKind::kConfig);
  bad = doc;
  bad["arrivals"]["rate_per_hour"] = -1;
  CHECK(kind_of([&] { scenario_from_json(bad); }) == ErrorKind::kConfig);
  bad = doc;
  bad["start"] = "not a time";
  CHECK(kind_of([&] { scenario_from_json(bad); }) == ErrorKind::kConfig);
}

TEST_CASE("a trace that stops inside the horizon fails before simulating") {
  Fixture f = fixture(1);
  f.config.end = f.config.start + Hours{24 * 5};
  CHECK(kind_of([&] { run_scenario(f.config, f.data); }) == ErrorKind::kData);
  f.config.end = f.config.start + Hours{24};
  f.config.workload_mix = {{"unknown_class", 1.0, {}}};
  CHECK(kind_of([&] { run_scenario(f.config, f.data); }) == ErrorKind::kData);
}

TEST_CASE("largest remainder splits exactly") {
  const std::vector<double> w{0.5, 0.3, 0.2};
  const auto s = largest_remainder(7, w);
  CHECK(s == std::vector<std::size_t>{4, 2, 1});
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> ws(1 + rng.index(8));
    for (auto& x : ws) x = rng.uniform();
    const std::size_t total = rng.index(100);
    const auto parts = largest_remainder(total, ws);
    std::size_t sum = 0;
    for (auto p : parts) sum += p;
    CHECK(sum == total);
  }
}

TEST_CASE("population-weighted arrivals and capacity follow the weights") {
  Fixture f = fixture(2, 24, 4);
  const std::string d0 = f.data.dcs.records()[0].dc_id, d1 = f.data.dcs.records()[1].dc_id;
  f.config.capacity = {CapacityKind::kPopulation, 0, 10, {{d0, 0.7}, {d1, 0.3}}};
  f.config.arrivals = {ArrivalKind::kPopulation, 8.0, {{d0, 1.0}}, {}};
  const auto servers = build_servers(f.config, f.data.dcs);
  CHECK(servers.size() == 10);
  CHECK(std::count_if(servers.begin(), servers.end(), [&](const auto& s) { return s.dc_id == d0; }) == 7);
  const auto arrivals = generate_arrivals(f.config, f.data.dcs);
  CHECK(!arrivals.empty());
  for (const auto& a : arrivals) CHECK(a.origin_dc == d0);
  f.config.capacity.weights = {{"nowhere", 1.0}};
  CHECK(kind_of([&] { build_servers(f.config, f.data.dcs); }) == ErrorKind::kData);
}

TEST_CASE("arrivals in a window closing after the horizon are unscheduled") {
  const Dataset data = single_site(100.0, 24);
  ScenarioConfig c = single_site_config(3);
  c.arrivals.events.push_back({parse_utc("2023-01-01T02:30:00Z"), "d", "app"});
  const auto r = run_scenario(c, data).report;
  CHECK(r.arrivals == 2);
  CHECK(r.placed == 1);
  CHECK(r.unscheduled == 1);
}

TEST_CASE("tidy CSV has one metric per row and totals match the intervals") {
  const Fixture f = fixture(1, 6);
  const auto r = run_scenario(f.config, f.data).report;
  std::ostringstream out;
  write_tidy_csv(out, std::span<const MetricsReport>(&r, 1));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "interval_start,policy,metric,value");
  double sum = 0.0, total = -1.0;
  while (std::getline(in, line)) {
    const auto fields = csv::split_row(line);
    REQUIRE(fields.size() == 4);
    if (fields[2] != "emissions_g") continue;
    if (fields[0] == "total") {
      total = *csv::parse_number(fields[3]);
    } else {
      sum += *csv::parse_number(fields[3]);
    }
  }
  CHECK(close(total, sum));
}
