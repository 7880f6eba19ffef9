#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "carbonedge/analysis.hpp"
#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/fixtures.hpp"
#include "carbonedge/sim.hpp"

namespace carbonedge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string data_dir;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string log_level = "warn";
};

class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::kData, "cannot create " + dir_.string() + ": " + ec.message());
  }

  // Path for a file the caller writes itself.
  fs::path record(const std::string& name) {
    names_.push_back(name);
    return dir_ / name;
  }

  std::ofstream open(const std::string& name) {
    names_.push_back(name);
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) fail(ErrorKind::kData, "cannot write " + (dir_ / name).string());
    return out;
  }

  void write(const std::string& name, const std::string& text) { open(name) << text; }

  // manifest.json lists every artifact with its fingerprint; nothing in it
  // depends on the clock.
  void finish(const std::string& command, json config, const std::map<std::string, std::string>& data) {
    json files = json::array();
    for (const auto& n : names_) files.push_back({{"name", n}, {"fnv1a", fingerprint_file(dir_ / n)}});
    const json manifest = {{"command", command}, {"config", std::move(config)}, {"data", data}, {"artifacts", files}};
    write("manifest.json", manifest.dump(2) + "\n");
  }

  std::vector<fs::path> paths() const {
    std::vector<fs::path> out;
    for (const auto& n : names_) out.push_back(dir_ / n);
    return out;
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

void list(std::ostream& out, const Artifacts& artifacts) {
  for (const auto& p : artifacts.paths()) out << p.generic_string() << '\n';
}

DataPaths default_paths() {
  DataPaths p;
  p.carbon = "carbon.csv";
  p.latency = "latency.csv";
  p.cities = "cities.csv";
  p.datacenters = "datacenters.csv";
  p.profiles = "profiles.json";
  return p;
}

fs::path data_base(const Globals& g, const std::string& scenario_path) {
  if (!g.data_dir.empty()) return g.data_dir;
  if (!scenario_path.empty()) return fs::path(scenario_path).parent_path();
  return ".";
}

PolicyConfig parse_policy_spec(const std::string& spec, const PolicyConfig& base) {
  PolicyConfig p = base;
  const auto colon = spec.find(':');
  p.kind = parse_policy_kind(spec.substr(0, colon));
  p.alpha.reset();
  if (colon != std::string::npos) {
    const auto a = csv::parse_number(spec.substr(colon + 1));
    if (!a) fail(ErrorKind::kConfig, "bad alpha in policy '" + spec + "'");
    p.alpha = *a;
  } else if (p.kind == PolicyKind::kTradeoff) {
    p.alpha = base.alpha.value_or(0.5);
  }
  validate(p);
  return p;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err, const std::string& level) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("carbonedge", sink);
  log->set_pattern("[%l] %v");
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") fail(ErrorKind::kConfig, "unknown log level " + level);
  log->set_level(lvl);
  return log;
}

int cmd_validate(const Globals& g, const std::string& scenario_path, const std::string& schema, bool interpolate,
                 std::ostream& out, std::ostream& err, spdlog::logger& log) {
  DataPaths paths = default_paths();
  std::optional<ScenarioConfig> scenario;
  if (!scenario_path.empty()) {
    scenario = load_scenario(scenario_path);
    paths = scenario->data;
  }
  if (!schema.empty()) paths.carbon_schema = schema;
  if (interpolate) paths.interpolate_gaps = true;
  const fs::path base = data_base(g, scenario_path);
  log.info("validating data in {}", base.string());
  const Dataset data = load_dataset(paths, base);

  std::vector<std::string> issues = cross_reference_issues(data.dcs, *data.latency, data.carbon);
  if (scenario) {
    for (const auto& rec : data.dcs.records()) {
      const auto* trace = data.carbon.find(rec.zone_id);
      if (trace != nullptr && !trace->covers(scenario->start, scenario->end)) {
        issues.push_back("zone " + rec.zone_id + " does not cover the scenario horizon");
      }
    }
    for (const auto& share : scenario->workload_mix) {
      if (!data.profiles.contains(share.app_class)) issues.push_back("no profile for app class " + share.app_class);
    }
  }
  std::size_t hours = 0;
  for (const auto& [zone, trace] : data.carbon) hours += trace.size();
  out << "zones " << data.carbon.size() << ", trace hours " << hours << ", cities " << data.cities.size()
      << ", data centers " << data.dcs.size() << ", latency locations " << data.latency->locations().size()
      << " (" << data.latency->missing_pairs() << " missing pairs), app classes " << data.profiles.size() << '\n';
  for (const auto& issue : issues) err << "invariant violation: " << issue << '\n';
  if (!issues.empty()) {
    err << issues.size() << " issue(s) found\n";
    return 2;
  }
  out << "clean\n";
  return 0;
}

int cmd_analyze(const Globals& g, const std::vector<double>& radii, std::ostream& out, spdlog::logger& log) {
  const DataPaths paths = default_paths();
  const fs::path base = data_base(g, "");
  RadiusStudyConfig config;
  config.radii_km = radii;
  validate(config);
  const auto carbon = load_carbon_traces(base / paths.carbon).registry;
  const auto latency = load_latency_matrix(base / paths.latency);
  const auto cities = load_cities(base / paths.cities);
  const auto dcs = load_datacenters(base / paths.datacenters, cities);
  const auto studies = run_radius_study(config, dcs, carbon, latency);

  Artifacts artifacts(g.out_dir);
  json summary = json::array();
  for (const auto& s : studies) {
    const std::string r = csv::format_number(s.radius_km);
    write_cdf_csv(artifacts.record("cdf_" + r + "km.csv"), s);
    write_latency_csv(artifacts.record("latency_" + r + "km.csv"), s);
    std::size_t with_neighbor = 0;
    for (const auto& d : s.diffs) with_neighbor += d.neighbor_id ? 1 : 0;
    json entry = {{"radius_km", s.radius_km},
                  {"data_centers", s.diffs.size()},
                  {"with_neighbor", with_neighbor},
                  {"fraction_above_25pct", fraction_exceeding(s.diffs, 25.0)},
                  {"fraction_above_50pct", fraction_exceeding(s.diffs, 50.0)},
                  {"latency_excluded", s.latency_excluded}};
    if (s.latency) {
      entry["one_way_ms"] = {{"p25", s.latency->p25_ms}, {"median", s.latency->median_ms}, {"p75", s.latency->p75_ms}};
    }
    summary.push_back(entry);
    out << "radius " << r << " km: " << with_neighbor << "/" << s.diffs.size() << " with a neighbor, "
        << s.latency_excluded << " excluded for missing latency\n";
    log.info("radius {} km done", r);
  }
  artifacts.write("analysis.json", json{{"radii", summary}}.dump(2) + "\n");
  std::map<std::string, std::string> fps;
  for (const auto& [role, p] : std::map<std::string, fs::path>{{"carbon", paths.carbon},
                                                               {"latency", paths.latency},
                                                               {"cities", paths.cities},
                                                               {"datacenters", paths.datacenters}}) {
    fps[role] = fingerprint_file(base / p);
  }
  artifacts.finish("analyze", json{{"radii_km", radii}}, fps);
  list(out, artifacts);
  return 0;
}

struct Loaded {
  ScenarioConfig config;
  Dataset data;
};

Loaded load(const Globals& g, const std::string& scenario_path, const std::string& policy) {
  Loaded l{load_scenario(scenario_path), {}};
  if (g.seed) l.config.seed = *g.seed;
  if (!policy.empty()) l.config.policy = parse_policy_spec(policy, l.config.policy);
  l.data = load_dataset(l.config.data, data_base(g, scenario_path));
  return l;
}

int cmd_run(const Globals& g, const std::string& scenario_path, const std::string& policy, std::ostream& out,
            std::ostream& err, spdlog::logger& log) {
  const Loaded l = load(g, scenario_path, policy);
  log.info("running {} from {} to {}", policy_label(l.config.policy), format_utc(l.config.start),
           format_utc(l.config.end));
  const RunResult result = run_scenario(l.config, l.data);

  Artifacts artifacts(g.out_dir);
  json report = to_json(result.report);
  report["manifest"] = {{"config", to_json(l.config)}, {"data", l.data.fingerprints}};
  artifacts.write("report.json", report.dump(2) + "\n");
  {
    auto f = artifacts.open("metrics.csv");
    write_tidy_csv(f, std::span<const MetricsReport>(&result.report, 1));
  }
  {
    auto f = artifacts.open("rounds.jsonl");
    for (const auto& r : result.rounds) append_round(f, r);
  }
  {
    auto f = artifacts.open("placements.csv");
    f << "app_id,server_id,dc_id,zone_id,start,end,energy_kwh_per_hour,rtt_ms,min_rtt_ms,service_time_ms\n";
    for (const auto& p : result.placements) {
      f << p.app_id << ',' << csv::quote_if_needed(p.server_id) << ',' << csv::quote_if_needed(p.dc_id) << ','
        << csv::quote_if_needed(p.zone_id) << ',' << format_utc(p.start) << ',' << format_utc(p.end) << ','
        << csv::format_number(p.energy_kwh_per_hour) << ',' << csv::format_number(p.rtt_ms) << ','
        << csv::format_number(p.min_rtt_ms) << ',' << csv::format_number(p.service_time_ms) << '\n';
    }
  }
  {
    auto f = artifacts.open("activations.csv");
    f << "server_id,zone_id,time,base_power_kwh_per_h,initial\n";
    for (const auto& a : result.activations) {
      f << csv::quote_if_needed(a.server_id) << ',' << csv::quote_if_needed(a.zone_id) << ',' << format_utc(a.time)
        << ',' << csv::format_number(a.base_power_kwh_per_h) << ',' << (a.initial ? 1 : 0) << '\n';
    }
  }
  artifacts.finish("run", to_json(l.config), l.data.fingerprints);
  list(out, artifacts);
  const auto& r = result.report;
  out << "emissions " << csv::format_number(r.emissions_g) << " g, energy " << csv::format_number(r.energy_kwh)
      << " kWh, placed " << r.placed << "/" << r.arrivals << '\n';
  if (r.rejected > 0) {
    err << "rejected " << r.rejected << " of " << r.arrivals << " app(s); see rounds.jsonl for reasons\n";
    return 3;
  }
  return 0;
}

int cmd_sweep(const Globals& g, const std::string& scenario_path, const std::string& policy,
              const std::string& dimension, const std::vector<double>& values, std::ostream& out,
              spdlog::logger& log) {
  const Loaded l = load(g, scenario_path, policy);
  const SweepDimension dim = parse_sweep_dimension(dimension);
  if (values.empty()) fail(ErrorKind::kConfig, "sweep needs --values");
  log.info("sweeping {} over {} value(s)", dimension, values.size());
  const auto points = sweep(l.config, l.data, dim, values, g.jobs);

  Artifacts artifacts(g.out_dir);
  artifacts.write("sweep.json", to_json(points, dim).dump(2) + "\n");
  {
    auto f = artifacts.open("sweep.csv");
    write_sweep_csv(f, points);
  }
  {
    auto f = artifacts.open("metrics.csv");
    f << "sweep_value,interval_start,policy,metric,value\n";
    for (const auto& p : points) {
      std::ostringstream body;
      const MetricsReport pair[] = {p.report, p.reference};
      write_tidy_csv(body, pair, false);
      std::istringstream lines(body.str());
      for (std::string line; std::getline(lines, line);) f << csv::format_number(p.value) << ',' << line << '\n';
    }
  }
  artifacts.finish("sweep", json{{"scenario", to_json(l.config)}, {"dimension", dimension}, {"values", values}},
                   l.data.fingerprints);
  list(out, artifacts);
  for (const auto& p : points) {
    out << dimension << ' ' << csv::format_number(p.value) << ": savings " << csv::format_number(p.savings_pct)
        << " %\n";
  }
  return 0;
}

bool is_baseline(PolicyKind k) {
  return k == PolicyKind::kLatencyAware || k == PolicyKind::kEnergyAware || k == PolicyKind::kIntensityAware;
}

int cmd_compare(const Globals& g, const std::string& scenario_path, const std::vector<std::string>& specs,
                std::ostream& out, std::ostream& err, spdlog::logger& log) {
  const Loaded l = load(g, scenario_path, "");
  std::vector<PolicyConfig> policies;
  for (const auto& s : specs) policies.push_back(parse_policy_spec(s, l.config.policy));
  if (policies.empty()) policies.push_back(l.config.policy);
  log.info("comparing {} polic(ies)", policies.size() + 1);
  const auto rows = compare_policies(l.config, l.data, policies, g.jobs);

  // Carbon-optimal placement must not emit more than any baseline.
  json dominance = json::array();
  std::size_t violations = 0;
  for (const auto& ce : rows) {
    if (ce.policy != "carbon_edge") continue;
    for (const auto& b : rows) {
      if (!is_baseline(parse_policy_kind(b.policy))) continue;
      const bool ok = ce.report.emissions_g <= b.report.emissions_g;
      violations += ok ? 0 : 1;
      dominance.push_back({{"baseline", b.policy}, {"holds", ok}});
      if (!ok) err << "dominance violated: carbon_edge emits more than " << b.policy << '\n';
    }
  }

  Artifacts artifacts(g.out_dir);
  json table = to_json(rows);
  table["dominance"] = dominance;
  table["dominance_violations"] = violations;
  artifacts.write("comparison.json", table.dump(2) + "\n");
  {
    auto f = artifacts.open("comparison.csv");
    write_comparison_csv(f, rows);
  }
  {
    auto f = artifacts.open("metrics.csv");
    std::vector<MetricsReport> reports;
    for (const auto& r : rows) reports.push_back(r.report);
    write_tidy_csv(f, reports);
  }
  json cfg = to_json(l.config);
  cfg["policies"] = json::array();
  for (const auto& p : policies) cfg["policies"].push_back(to_json(p));
  artifacts.finish("compare", cfg, l.data.fingerprints);
  list(out, artifacts);
  std::size_t rejected = 0;
  for (const auto& r : rows) {
    out << r.policy << ": " << csv::format_number(r.report.emissions_g) << " g, savings "
        << csv::format_number(r.savings_pct) << " %\n";
    rejected += r.report.rejected;
  }
  if (rejected > 0) {
    err << "rejected " << rejected << " app(s) across policies\n";
    return 3;
  }
  return 0;
}

int cmd_fixtures(const Globals& g, const std::string& generator_path, std::optional<std::size_t> dcs,
                 std::optional<std::size_t> zones, std::optional<std::size_t> hours, std::ostream& out) {
  GeneratorConfig config;
  if (!generator_path.empty()) {
    std::ifstream in(generator_path);
    if (!in) fail(ErrorKind::kConfig, "cannot open " + generator_path);
    std::stringstream text;
    text << in.rdbuf();
    config = parse_generator_config(text.str());
  }
  if (dcs) config.dcs = *dcs;
  if (zones) config.zones = *zones;
  if (hours) config.hours = *hours;
  const auto paths = write_fixtures(g.out_dir, config, g.seed.value_or(1));
  for (const auto& p : paths) out << p.generic_string() << '\n';
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 1;
    case ErrorKind::kPrecondition: return 4;
    default: return 2;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Carbon-aware placement of edge applications: data checks, studies and simulations.", "carbonedge"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data-dir", g.data_dir, "Directory holding the input data (default: the scenario's directory)");
  app.add_option("--out-dir", g.out_dir, "Directory for result artifacts")->capture_default_str();
  app.add_option("--seed", g.seed, "Override the scenario seed");
  app.add_option("--jobs", g.jobs, "Concurrent scenario runs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  std::string scenario, policy, schema, generator, dimension;
  bool interpolate = false;
  std::vector<double> radii{200.0, 500.0, 1000.0}, values;
  std::vector<std::string> policies;
  std::optional<std::size_t> fx_dcs, fx_zones, fx_hours;

  auto* validate_cmd = app.add_subcommand("validate", "Load every input and report invariant violations");
  validate_cmd->add_option("--scenario", scenario, "Take data file names from this scenario");
  validate_cmd->add_option("--carbon-schema", schema, "native or electricitymaps");
  validate_cmd->add_flag("--interpolate-gaps", interpolate, "Fill short trace gaps linearly");

  auto* analyze_cmd = app.add_subcommand("analyze", "Best-neighbor intensity differences per search radius");
  analyze_cmd->add_option("--radii", radii, "Radii in km")->delimiter(',')->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "Simulate one scenario");
  run_cmd->add_option("scenario", scenario, "Scenario JSON")->required();
  run_cmd->add_option("--policy", policy, "Policy override, e.g. latency_aware or tradeoff:0.3");

  auto* sweep_cmd = app.add_subcommand("sweep", "Simulate a scenario across values of one setting");
  sweep_cmd->add_option("scenario", scenario, "Scenario JSON")->required();
  sweep_cmd->add_option("--policy", policy, "Policy override");
  sweep_cmd->add_option("--dimension", dimension, "latency_limit, alpha or month")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();

  auto* compare_cmd = app.add_subcommand("compare", "Simulate several policies on identical arrivals");
  compare_cmd->add_option("scenario", scenario, "Scenario JSON")->required();
  compare_cmd->add_option("--policies", policies, "Comma-separated policies")->delimiter(',');

  auto* fixtures_cmd = app.add_subcommand("fixtures", "Write a synthetic data set and scenario");
  fixtures_cmd->add_option("--generator", generator, "Generator config JSON");
  fixtures_cmd->add_option("--dcs", fx_dcs, "Number of data centers");
  fixtures_cmd->add_option("--zones", fx_zones, "Number of carbon zones");
  fixtures_cmd->add_option("--hours", fx_hours, "Trace length in hours");

  std::vector<char*> argv;
  std::string name = "carbonedge";
  argv.push_back(name.data());
  std::vector<std::string> copy = args;
  for (auto& a : copy) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    auto log = make_logger(err, g.log_level);
    if (*validate_cmd) return cmd_validate(g, scenario, schema, interpolate, out, err, *log);
    if (*analyze_cmd) return cmd_analyze(g, radii, out, *log);
    if (*run_cmd) return cmd_run(g, scenario, policy, out, err, *log);
    if (*sweep_cmd) return cmd_sweep(g, scenario, policy, dimension, values, out, *log);
    if (*compare_cmd) return cmd_compare(g, scenario, policies, out, err, *log);
    if (*fixtures_cmd) return cmd_fixtures(g, generator, fx_dcs, fx_zones, fx_hours, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 4;
  }
  return 4;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace carbonedge::cli
