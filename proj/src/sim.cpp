#include "carbonedge/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "carbonedge/analysis.hpp"
#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/kernels.hpp"
#include "carbonedge/rng.hpp"

namespace carbonedge {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_keys(const json& doc, std::initializer_list<const char*> known, const std::string& where) {
  if (!doc.is_object()) fail(ErrorKind::kConfig, where + " must be a JSON object");
  for (const auto& [key, v] : doc.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      fail(ErrorKind::kConfig, where + ": unknown field '" + key + "'");
    }
  }
}

TimePoint config_time(const json& v, const std::string& field) {
  try {
    return parse_utc(v.get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, "scenario " + field + ": " + e.what());
  }
}

void check_weights(const std::map<std::string, double>& weights, const std::string& where) {
  if (weights.empty()) fail(ErrorKind::kConfig, where + ": weights are required");
  double total = 0.0;
  for (const auto& [dc, w] : weights) {
    if (!std::isfinite(w) || w < 0.0) fail(ErrorKind::kConfig, where + ": weight of " + dc + " must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) fail(ErrorKind::kConfig, where + ": weights must sum to 1");
}

Seconds to_seconds(double hours) { return Seconds{static_cast<std::int64_t>(std::llround(hours * 3600.0))}; }

}  // namespace

void validate(const ScenarioConfig& c) {
  if (!(c.end > c.start)) fail(ErrorKind::kConfig, "scenario horizon is empty");
  if (!is_hour_aligned(c.start) || !is_hour_aligned(c.end)) {
    fail(ErrorKind::kConfig, "scenario start and end must be whole hours");
  }
  if (!std::isfinite(c.batch_interval_minutes) || c.batch_interval_minutes <= 0.0 ||
      to_seconds(c.batch_interval_minutes / 60.0).count() <= 0) {
    fail(ErrorKind::kConfig, "batch interval must be positive");
  }
  if (!std::isfinite(c.latency_limit_ms) || c.latency_limit_ms <= 0.0) {
    fail(ErrorKind::kConfig, "latency limit must be positive");
  }
  if (c.forecast_horizon_hours == 0) fail(ErrorKind::kConfig, "forecast horizon must be at least one hour");
  const auto& a = c.arrivals;
  if (!std::isfinite(a.rate_per_hour) || a.rate_per_hour < 0.0) fail(ErrorKind::kConfig, "arrival rate must be >= 0");
  if (a.kind == ArrivalKind::kPopulation) check_weights(a.weights, "arrivals");
  if (c.capacity.kind == CapacityKind::kPopulation) check_weights(c.capacity.weights, "capacity");
  if (c.device_classes.empty()) fail(ErrorKind::kConfig, "at least one device class is required");
  for (const auto& [name, d] : c.device_classes) {
    if (!std::isfinite(d.base_power_kwh_per_h) || d.base_power_kwh_per_h < 0.0) {
      fail(ErrorKind::kConfig, "device class " + name + ": base power must be >= 0");
    }
    for (const auto& [dim, q] : d.capacities) {
      if (!std::isfinite(q) || q < 0.0) fail(ErrorKind::kConfig, "device class " + name + ": negative capacity");
    }
  }
  if (c.device_mix.empty()) fail(ErrorKind::kConfig, "device mix must not be empty");
  for (const auto& d : c.device_mix) {
    if (!c.device_classes.contains(d)) fail(ErrorKind::kConfig, "device mix names unknown class " + d);
  }
  if (!(c.initially_on >= 0.0 && c.initially_on <= 1.0)) fail(ErrorKind::kConfig, "initially_on must lie in [0, 1]");
  if (c.workload_mix.empty()) fail(ErrorKind::kConfig, "workload mix must not be empty");
  double total = 0.0;
  for (const auto& s : c.workload_mix) {
    if (s.app_class.empty()) fail(ErrorKind::kConfig, "workload mix entry without app_class");
    if (!std::isfinite(s.weight) || s.weight < 0.0) fail(ErrorKind::kConfig, "workload weights must be >= 0");
    total += s.weight;
  }
  if (!(total > 0.0)) fail(ErrorKind::kConfig, "workload weights must not all be zero");
  if (c.lifetime.kind != LifetimeKind::kForever && !(c.lifetime.hours > 0.0 && std::isfinite(c.lifetime.hours))) {
    fail(ErrorKind::kConfig, "lifetime hours must be positive");
  }
  validate(c.policy);
}

ScenarioConfig scenario_from_json(const json& doc) {
  ScenarioConfig c;
  check_keys(doc,
             {"start", "end", "seed", "batch_interval_minutes", "latency_limit_ms", "forecast_horizon_hours", "arrivals",
              "capacity", "device_classes", "device_mix", "initially_on", "workload_mix", "lifetime", "policy", "data"},
             "scenario");
  try {
    c.start = config_time(doc.at("start"), "start");
    c.end = config_time(doc.at("end"), "end");
    c.seed = doc.value("seed", c.seed);
    c.batch_interval_minutes = doc.value("batch_interval_minutes", c.batch_interval_minutes);
    c.latency_limit_ms = doc.value("latency_limit_ms", c.latency_limit_ms);
    c.forecast_horizon_hours = doc.value("forecast_horizon_hours", c.forecast_horizon_hours);

    const json& a = doc.at("arrivals");
    check_keys(a, {"model", "rate_per_hour", "weights", "events"}, "arrivals");
    const std::string am = a.at("model").get<std::string>();
    if (am == "uniform") {
      c.arrivals.kind = ArrivalKind::kUniform;
    } else if (am == "population") {
      c.arrivals.kind = ArrivalKind::kPopulation;
    } else if (am == "explicit") {
      c.arrivals.kind = ArrivalKind::kExplicit;
    } else {
      fail(ErrorKind::kConfig, "arrivals: unknown model '" + am + "'");
    }
    c.arrivals.rate_per_hour = a.value("rate_per_hour", 0.0);
    c.arrivals.weights = a.value("weights", std::map<std::string, double>{});
    if (a.contains("events")) {
      for (const auto& e : a["events"]) {
        check_keys(e, {"time", "dc", "app_class"}, "arrival event");
        c.arrivals.events.push_back(
            {config_time(e.at("time"), "event time"), e.at("dc").get<std::string>(), e.value("app_class", "")});
      }
    }

    if (doc.contains("capacity")) {
      const json& cap = doc["capacity"];
      check_keys(cap, {"model", "servers_per_dc", "total_servers", "weights"}, "capacity");
      const std::string cm = cap.at("model").get<std::string>();
      if (cm == "homogeneous") {
        c.capacity.kind = CapacityKind::kHomogeneous;
      } else if (cm == "population") {
        c.capacity.kind = CapacityKind::kPopulation;
      } else {
        fail(ErrorKind::kConfig, "capacity: unknown model '" + cm + "'");
      }
      c.capacity.servers_per_dc = cap.value("servers_per_dc", c.capacity.servers_per_dc);
      c.capacity.total_servers = cap.value("total_servers", c.capacity.total_servers);
      c.capacity.weights = cap.value("weights", std::map<std::string, double>{});
    }

    for (const auto& [name, d] : doc.at("device_classes").items()) {
      check_keys(d, {"capacities", "base_power_kwh_per_h"}, "device class " + name);
      c.device_classes[name] = {d.value("capacities", Resources{}), d.value("base_power_kwh_per_h", 0.0)};
    }
    if (doc.contains("device_mix")) {
      c.device_mix = doc["device_mix"].get<std::vector<std::string>>();
    } else {
      for (const auto& [name, d] : c.device_classes) c.device_mix.push_back(name);
    }
    c.initially_on = doc.value("initially_on", c.initially_on);

    for (const auto& w : doc.at("workload_mix")) {
      check_keys(w, {"app_class", "weight", "device_classes"}, "workload mix");
      c.workload_mix.push_back({w.at("app_class").get<std::string>(), w.value("weight", 1.0),
                                w.value("device_classes", std::vector<std::string>{})});
    }

    if (doc.contains("lifetime")) {
      const json& l = doc["lifetime"];
      check_keys(l, {"model", "hours"}, "lifetime");
      const std::string lm = l.at("model").get<std::string>();
      if (lm == "forever") {
        c.lifetime.kind = LifetimeKind::kForever;
      } else if (lm == "fixed") {
        c.lifetime.kind = LifetimeKind::kFixed;
      } else if (lm == "exponential") {
        c.lifetime.kind = LifetimeKind::kExponential;
      } else {
        fail(ErrorKind::kConfig, "lifetime: unknown model '" + lm + "'");
      }
      c.lifetime.hours = l.value("hours", 0.0);
    }

    if (doc.contains("policy")) c.policy = policy_config_from_json(doc["policy"]);

    const json& d = doc.at("data");
    check_keys(d, {"carbon", "carbon_schema", "interpolate_gaps", "latency", "cities", "datacenters", "profiles"},
               "data");
    c.data.carbon = d.at("carbon").get<std::string>();
    c.data.carbon_schema = d.value("carbon_schema", c.data.carbon_schema);
    parse_trace_schema(c.data.carbon_schema);
    c.data.interpolate_gaps = d.value("interpolate_gaps", false);
    c.data.latency = d.at("latency").get<std::string>();
    c.data.cities = d.at("cities").get<std::string>();
    c.data.datacenters = d.at("datacenters").get<std::string>();
    c.data.profiles = d.at("profiles").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("scenario: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    fail(ErrorKind::kConfig, std::string("scenario: ") + e.what());
  }
  validate(c);
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfig, "cannot open scenario " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, path.filename().string() + ": " + e.what());
  }
  return scenario_from_json(doc);
}

json to_json(const ScenarioConfig& c) {
  static const char* arrival_names[] = {"uniform", "population", "explicit"};
  static const char* lifetime_names[] = {"forever", "fixed", "exponential"};
  json arrivals = {{"model", arrival_names[static_cast<int>(c.arrivals.kind)]},
                   {"rate_per_hour", c.arrivals.rate_per_hour}};
  if (!c.arrivals.weights.empty()) arrivals["weights"] = c.arrivals.weights;
  if (!c.arrivals.events.empty()) {
    json events = json::array();
    for (const auto& e : c.arrivals.events) {
      events.push_back({{"time", format_utc(e.time)}, {"dc", e.dc_id}, {"app_class", e.app_class}});
    }
    arrivals["events"] = events;
  }
  json capacity = {{"model", c.capacity.kind == CapacityKind::kHomogeneous ? "homogeneous" : "population"},
                   {"servers_per_dc", c.capacity.servers_per_dc},
                   {"total_servers", c.capacity.total_servers}};
  if (!c.capacity.weights.empty()) capacity["weights"] = c.capacity.weights;
  json devices = json::object();
  for (const auto& [name, d] : c.device_classes) {
    devices[name] = {{"capacities", d.capacities}, {"base_power_kwh_per_h", d.base_power_kwh_per_h}};
  }
  json mix = json::array();
  for (const auto& s : c.workload_mix) {
    mix.push_back({{"app_class", s.app_class}, {"weight", s.weight}, {"device_classes", s.device_classes}});
  }
  json lifetime = {{"model", lifetime_names[static_cast<int>(c.lifetime.kind)]}};
  if (c.lifetime.kind != LifetimeKind::kForever) lifetime["hours"] = c.lifetime.hours;
  return {{"start", format_utc(c.start)},
          {"end", format_utc(c.end)},
          {"seed", c.seed},
          {"batch_interval_minutes", c.batch_interval_minutes},
          {"latency_limit_ms", c.latency_limit_ms},
          {"forecast_horizon_hours", c.forecast_horizon_hours},
          {"arrivals", arrivals},
          {"capacity", capacity},
          {"device_classes", devices},
          {"device_mix", c.device_mix},
          {"initially_on", c.initially_on},
          {"workload_mix", mix},
          {"lifetime", lifetime},
          {"policy", to_json(c.policy)},
          {"data",
           {{"carbon", c.data.carbon.generic_string()},
            {"carbon_schema", c.data.carbon_schema},
            {"interpolate_gaps", c.data.interpolate_gaps},
            {"latency", c.data.latency.generic_string()},
            {"cities", c.data.cities.generic_string()},
            {"datacenters", c.data.datacenters.generic_string()},
            {"profiles", c.data.profiles.generic_string()}}}};
}

std::string fingerprint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot read " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

Dataset load_dataset(const DataPaths& paths, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() || base_dir.empty() ? p : base_dir / p; };
  Dataset d;
  TraceLoadOptions opts;
  opts.interpolate_gaps = paths.interpolate_gaps;
  d.carbon = load_carbon_traces(resolve(paths.carbon), parse_trace_schema(paths.carbon_schema), opts).registry;
  d.latency = std::make_unique<LatencyMatrix>(load_latency_matrix(resolve(paths.latency)));
  d.cities = load_cities(resolve(paths.cities));
  d.dcs = load_datacenters(resolve(paths.datacenters), d.cities);
  d.profiles = load_profiles(resolve(paths.profiles));
  d.fingerprints["carbon"] = fingerprint_file(resolve(paths.carbon));
  d.fingerprints["latency"] = fingerprint_file(resolve(paths.latency));
  d.fingerprints["cities"] = fingerprint_file(resolve(paths.cities));
  d.fingerprints["datacenters"] = fingerprint_file(resolve(paths.datacenters));
  d.fingerprints["profiles"] = fingerprint_file(resolve(paths.profiles));
  return d;
}

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  std::vector<std::size_t> out(weights.size(), 0);
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (weights.empty() || !(sum > 0.0)) return out;
  std::vector<double> rem(weights.size());
  std::size_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(out[i]);
    given += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[order[k % order.size()]];
  return out;
}

namespace {

std::vector<double> dc_weights(const std::map<std::string, double>& weights, const DataCenterRegistry& dcs,
                               const std::string& where) {
  for (const auto& [dc, w] : weights) {
    if (dcs.find(dc) == nullptr) fail(ErrorKind::kData, where + ": unknown data center " + dc);
  }
  std::vector<double> out;
  for (const auto& rec : dcs.records()) {
    auto it = weights.find(rec.dc_id);
    out.push_back(it == weights.end() ? 0.0 : it->second);
  }
  return out;
}

}  // namespace

std::vector<ServerState> build_servers(const ScenarioConfig& config, const DataCenterRegistry& dcs) {
  std::vector<std::size_t> counts(dcs.size(), config.capacity.servers_per_dc);
  if (config.capacity.kind == CapacityKind::kPopulation) {
    counts = largest_remainder(config.capacity.total_servers, dc_weights(config.capacity.weights, dcs, "capacity"));
  }
  std::vector<ServerState> servers;
  for (std::size_t d = 0; d < dcs.size(); ++d) {
    const auto& rec = dcs.records()[d];
    const auto on = static_cast<std::size_t>(std::llround(config.initially_on * static_cast<double>(counts[d])));
    for (std::size_t k = 0; k < counts[d]; ++k) {
      const std::string& device = config.device_mix[k % config.device_mix.size()];
      const DeviceClass& cls = config.device_classes.at(device);
      ServerState s;
      s.server_id = rec.dc_id + "/s" + std::to_string(k);
      s.dc_id = rec.dc_id;
      s.device_class = device;
      s.capacities = cls.capacities;
      s.base_power_kwh_per_h = cls.base_power_kwh_per_h;
      s.powered_on = k < on;
      servers.push_back(std::move(s));
    }
  }
  return servers;
}

std::vector<Arrival> generate_arrivals(const ScenarioConfig& config, const DataCenterRegistry& dcs) {
  Rng rng(config.seed);
  double mix_total = 0.0;
  for (const auto& s : config.workload_mix) mix_total += s.weight;
  auto pick_share = [&]() -> const WorkloadShare& {
    const double u = rng.uniform() * mix_total;
    double acc = 0.0;
    for (const auto& s : config.workload_mix) {
      acc += s.weight;
      if (u < acc) return s;
    }
    for (auto it = config.workload_mix.rbegin(); it != config.workload_mix.rend(); ++it) {
      if (it->weight > 0.0) return *it;
    }
    return config.workload_mix.back();
  };
  auto lifetime = [&]() {
    switch (config.lifetime.kind) {
      case LifetimeKind::kForever: return kInf;
      case LifetimeKind::kFixed: return config.lifetime.hours;
      case LifetimeKind::kExponential: return rng.exponential(1.0 / config.lifetime.hours);
    }
    return kInf;
  };

  struct Keyed {
    Arrival arrival;
    std::size_t dc_index;
    std::size_t seq;
  };
  std::vector<Keyed> keyed;
  std::unordered_map<std::string, std::size_t> dc_index;
  for (std::size_t d = 0; d < dcs.size(); ++d) dc_index[dcs.records()[d].dc_id] = d;
  const double horizon_h = hours_between(config.start, config.end);

  if (config.arrivals.kind == ArrivalKind::kExplicit) {
    for (const auto& e : config.arrivals.events) {
      auto it = dc_index.find(e.dc_id);
      if (it == dc_index.end()) fail(ErrorKind::kData, "arrival event at unknown data center " + e.dc_id);
      if (e.time < config.start || e.time >= config.end) continue;
      Arrival a;
      a.origin_dc = e.dc_id;
      a.time = e.time;
      if (e.app_class.empty()) {
        const auto& share = pick_share();
        a.app_class = share.app_class;
        a.device_classes = share.device_classes;
      } else {
        a.app_class = e.app_class;
        for (const auto& s : config.workload_mix) {
          if (s.app_class == e.app_class) a.device_classes = s.device_classes;
        }
      }
      a.lifetime_hours = lifetime();
      keyed.push_back({std::move(a), it->second, keyed.size()});
    }
  } else {
    std::vector<double> rates(dcs.size(), config.arrivals.rate_per_hour);
    if (config.arrivals.kind == ArrivalKind::kPopulation) {
      const auto w = dc_weights(config.arrivals.weights, dcs, "arrivals");
      for (std::size_t d = 0; d < dcs.size(); ++d) rates[d] = config.arrivals.rate_per_hour * w[d];
    }
    for (std::size_t d = 0; d < dcs.size(); ++d) {
      if (!(rates[d] > 0.0)) continue;
      double t = rng.exponential(rates[d]);
      while (t < horizon_h) {
        Arrival a;
        a.origin_dc = dcs.records()[d].dc_id;
        a.time = config.start + to_seconds(t);
        const auto& share = pick_share();
        a.app_class = share.app_class;
        a.device_classes = share.device_classes;
        a.lifetime_hours = lifetime();
        if (a.time < config.end) keyed.push_back({std::move(a), d, keyed.size()});
        t += rng.exponential(rates[d]);
      }
    }
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.arrival.time != b.arrival.time) return a.arrival.time < b.arrival.time;
    if (a.dc_index != b.dc_index) return a.dc_index < b.dc_index;
    return a.seq < b.seq;
  });
  std::vector<Arrival> out;
  out.reserve(keyed.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "a%07zu", i);
    keyed[i].arrival.app_id = id;
    out.push_back(std::move(keyed[i].arrival));
  }
  return out;
}

std::string policy_label(const PolicyConfig& policy) {
  std::string label(to_string(policy.kind));
  if (policy.kind == PolicyKind::kTradeoff && policy.alpha) label += "_" + csv::format_number(*policy.alpha);
  return label;
}

namespace {

void check_data(const ScenarioConfig& config, const Dataset& data) {
  if (!data.latency) fail(ErrorKind::kData, "dataset has no latency matrix");
  if (data.dcs.size() == 0) fail(ErrorKind::kData, "dataset has no data centers");
  const auto issues = cross_reference_issues(data.dcs, *data.latency, data.carbon);
  if (!issues.empty()) fail(ErrorKind::kData, issues.front());
  for (const auto& rec : data.dcs.records()) {
    const auto& trace = data.carbon.at(rec.zone_id);
    if (!trace.covers(config.start, config.end)) {
      fail(ErrorKind::kData, "zone " + rec.zone_id + ": trace " + format_utc(trace.start()) + ".." +
                                 format_utc(trace.end()) + " does not cover the horizon " + format_utc(config.start) +
                                 ".." + format_utc(config.end));
    }
  }
  for (const auto& share : config.workload_mix) {
    auto it = data.profiles.find(share.app_class);
    if (it == data.profiles.end()) fail(ErrorKind::kData, "no workload profile for app class " + share.app_class);
    bool any = share.device_classes.empty() && !it->second.by_device.empty();
    for (const auto& d : share.device_classes) any = any || it->second.by_device.contains(d);
    if (!any) fail(ErrorKind::kData, "app class " + share.app_class + " has no profile row for its device classes");
  }
  for (const auto& e : config.arrivals.events) {
    if (!e.app_class.empty() && !data.profiles.contains(e.app_class)) {
      fail(ErrorKind::kData, "no workload profile for app class " + e.app_class);
    }
  }
}

class RttCache {
 public:
  RttCache(const Topology& topo) : topo_(&topo), n_(topo.datacenters().size()), rtt_(n_ * n_, -1.0) {
    for (std::size_t d = 0; d < n_; ++d) index_[topo.datacenters().records()[d].dc_id] = d;
  }
  std::size_t index(const std::string& dc) const { return index_.at(dc); }
  double get(std::size_t a, std::size_t b) {
    double& v = rtt_[a * n_ + b];
    if (v < 0.0) {
      const auto& recs = topo_->datacenters().records();
      v = topo_->rtt_ms(recs[a].dc_id, recs[b].dc_id);
    }
    return v;
  }

 private:
  const Topology* topo_;
  std::size_t n_;
  std::vector<double> rtt_;
  std::unordered_map<std::string, std::size_t> index_;
};

double overlap_hours(TimePoint s, TimePoint e, TimePoint a, TimePoint b) {
  const TimePoint lo = std::max(s, a);
  const TimePoint hi = std::min(e, b);
  return hi > lo ? hours_between(lo, hi) : 0.0;
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config, const Dataset& data) {
  validate(config);
  check_data(config, data);
  const Topology topo(*data.latency, data.dcs);
  RttCache rtt(topo);
  const auto servers = build_servers(config, data.dcs);
  const auto arrivals = generate_arrivals(config, data.dcs);
  ClusterState state(servers);

  RunResult out;
  MetricsReport& rep = out.report;
  rep.policy = policy_label(config.policy);
  const auto hours = static_cast<std::size_t>((config.end - config.start) / Hours{1});
  rep.intervals.resize(hours);
  for (std::size_t h = 0; h < hours; ++h) rep.intervals[h].start = config.start + Hours{static_cast<long>(h)};
  auto hour_of = [&](TimePoint t) { return static_cast<std::size_t>((t - config.start) / Hours{1}); };

  for (const auto& s : servers) {
    if (s.powered_on) {
      out.activations.push_back({s.server_id, topo.zone_of(s.dc_id), config.start, s.base_power_kwh_per_h, true});
    }
  }

  // Data centers that host each device class, for the nearest-possible rtt.
  std::map<std::string, std::vector<std::size_t>> dcs_by_device;
  for (const auto& s : servers) {
    auto& v = dcs_by_device[s.device_class];
    const std::size_t d = rtt.index(s.dc_id);
    if (v.empty() || v.back() != d) v.push_back(d);
  }

  const Seconds step = to_seconds(config.batch_interval_minutes / 60.0);
  std::multimap<TimePoint, std::string> running;  // end -> app
  std::map<TimePoint, IntensityForecasts> forecast_cache;
  std::size_t next = 0;
  rep.arrivals = arrivals.size();
  for (const auto& a : arrivals) ++rep.intervals[hour_of(a.time)].arrivals;

  while (next < arrivals.size()) {
    const auto window = static_cast<std::int64_t>((arrivals[next].time - config.start) / step);
    const TimePoint decision = config.start + step * (window + 1);
    std::size_t stop = next;
    while (stop < arrivals.size() && arrivals[stop].time < decision) ++stop;
    if (decision >= config.end) {
      rep.unscheduled += arrivals.size() - next;
      break;
    }

    std::vector<std::string> released;
    while (!running.empty() && running.begin()->first <= decision) {
      released.push_back(running.begin()->second);
      state = release(state, running.begin()->second);
      running.erase(running.begin());
    }

    std::vector<ApplicationRequest> batch;
    for (std::size_t i = next; i < stop; ++i) {
      const Arrival& a = arrivals[i];
      batch.push_back(make_request(a.app_id, a.origin_dc, config.latency_limit_ms, a.time, data.profiles.at(a.app_class),
                                   a.device_classes));
    }
    const TimePoint fhour = floor_hour(decision);
    auto fit = forecast_cache.find(fhour);
    if (fit == forecast_cache.end()) {
      forecast_cache.clear();
      IntensityForecasts f;
      for (const auto& rec : data.dcs.records()) {
        if (!f.contains(rec.zone_id)) {
          f.set(make_forecast(data.carbon.at(rec.zone_id), fhour, config.forecast_horizon_hours));
        }
      }
      fit = forecast_cache.emplace(fhour, std::move(f)).first;
    }

    auto [round, after] = place_batch(state, batch, topo, fit->second, config.policy);
    round.released_before = std::move(released);
    IntervalMetrics& iv = rep.intervals[hour_of(decision)];
    iv.rejected += round.rejected.size();
    rep.rejected += round.rejected.size();

    for (std::size_t i = next; i < stop; ++i) {
      const Arrival& a = arrivals[i];
      auto it = round.plan.assignments.find(a.app_id);
      if (it == round.plan.assignments.end()) continue;
      const ApplicationRequest& app = batch[i - next];
      const ServerState& server = after.server(it->second);
      const ProfileRow& row = *app.row_for(server);
      PlacementRecord p;
      p.app_id = a.app_id;
      p.server_id = server.server_id;
      p.dc_id = server.dc_id;
      p.zone_id = topo.zone_of(server.dc_id);
      p.start = decision;
      p.end = std::isinf(a.lifetime_hours) ? config.end : std::min(config.end, decision + to_seconds(a.lifetime_hours));
      p.energy_kwh_per_hour = row.energy_kwh_per_hour;
      const std::size_t origin = rtt.index(a.origin_dc);
      p.rtt_ms = rtt.get(origin, rtt.index(server.dc_id));
      p.min_rtt_ms = kInf;
      for (const auto& [device, r] : app.device_rows) {
        auto dit = dcs_by_device.find(device);
        if (dit == dcs_by_device.end()) continue;
        for (auto d : dit->second) p.min_rtt_ms = std::min(p.min_rtt_ms, rtt.get(origin, d));
      }
      p.latency_limit_ms = app.latency_limit_ms;
      p.service_time_ms = row.service_time_ms;
      if (p.end < config.end) running.emplace(p.end, p.app_id);
      ++iv.placed;
      ++rep.placed;
      out.placements.push_back(std::move(p));
    }
    for (std::size_t j = 0; j < servers.size(); ++j) {
      const auto& before = state.servers()[j];
      const auto& now = after.servers()[j];
      if (now.powered_on && !before.powered_on) {
        out.activations.push_back({now.server_id, topo.zone_of(now.dc_id), decision, now.base_power_kwh_per_h, false});
      }
    }
    state = std::move(after);
    out.rounds.push_back(std::move(round));
    next = stop;
  }

  // Hourly ledger at the realized intensity.
  for (const auto& p : out.placements) {
    const auto& trace = data.carbon.at(p.zone_id);
    for (std::size_t h = hour_of(p.start); h < hours && rep.intervals[h].start < p.end; ++h) {
      IntervalMetrics& iv = rep.intervals[h];
      const double ov = overlap_hours(p.start, p.end, iv.start, iv.start + Hours{1});
      if (ov <= 0.0) continue;
      const double kwh = p.energy_kwh_per_hour * ov;
      iv.operation_kwh += kwh;
      iv.operation_g += kwh * trace.at(iv.start);
      ++iv.active_apps;
    }
  }
  for (const auto& a : out.activations) {
    const auto& trace = data.carbon.at(a.zone_id);
    for (std::size_t h = hour_of(a.time); h < hours; ++h) {
      IntervalMetrics& iv = rep.intervals[h];
      const double ov = overlap_hours(a.time, config.end, iv.start, iv.start + Hours{1});
      const double kwh = a.base_power_kwh_per_h * ov;
      iv.base_kwh += kwh;
      iv.base_g += kwh * trace.at(iv.start);
      ++iv.powered_servers;
    }
    if (!a.initial) {
      ++rep.activations;
      rep.activation_one_shot_g += a.base_power_kwh_per_h * trace.at(a.time);
    }
  }

  std::vector<double> op_g, base_g, op_kwh, base_kwh, em, en;
  for (const auto& iv : rep.intervals) {
    op_g.push_back(iv.operation_g);
    base_g.push_back(iv.base_g);
    op_kwh.push_back(iv.operation_kwh);
    base_kwh.push_back(iv.base_kwh);
    em.push_back(iv.emissions_g());
    en.push_back(iv.energy_kwh());
  }
  rep.operation_g = kernels::sum(op_g);
  rep.base_g = kernels::sum(base_g);
  rep.operation_kwh = kernels::sum(op_kwh);
  rep.base_kwh = kernels::sum(base_kwh);
  rep.emissions_g = kernels::sum(em);
  rep.energy_kwh = kernels::sum(en);

  std::vector<double> increase, rtts, e2e;
  for (const auto& p : out.placements) {
    ++rep.dc_load[p.dc_id];
    if (p.rtt_ms > p.latency_limit_ms) ++rep.slo_violations;
    increase.push_back(p.rtt_ms - p.min_rtt_ms);
    rtts.push_back(p.rtt_ms);
    e2e.push_back(p.rtt_ms + p.service_time_ms);
  }
  if (!out.placements.empty()) {
    rep.rtt_mean_ms = kernels::mean(rtts);
    rep.rtt_increase_mean_ms = kernels::mean(increase);
    rep.end_to_end_mean_ms = kernels::mean(e2e);
    std::sort(increase.begin(), increase.end());
    rep.rtt_increase_median_ms = quantile_sorted(increase, 0.5);
  }
  return out;
}

json to_json(const MetricsReport& r) {
  json intervals = json::array();
  for (const auto& iv : r.intervals) {
    intervals.push_back({{"start", format_utc(iv.start)},
                         {"emissions_g", iv.emissions_g()},
                         {"operation_g", iv.operation_g},
                         {"base_g", iv.base_g},
                         {"energy_kwh", iv.energy_kwh()},
                         {"operation_kwh", iv.operation_kwh},
                         {"base_kwh", iv.base_kwh},
                         {"arrivals", iv.arrivals},
                         {"placed", iv.placed},
                         {"rejected", iv.rejected},
                         {"active_apps", iv.active_apps},
                         {"powered_servers", iv.powered_servers}});
  }
  return {{"policy", r.policy},
          {"totals",
           {{"emissions_g", r.emissions_g},
            {"operation_g", r.operation_g},
            {"base_g", r.base_g},
            {"activation_one_shot_g", r.activation_one_shot_g},
            {"energy_kwh", r.energy_kwh},
            {"operation_kwh", r.operation_kwh},
            {"base_kwh", r.base_kwh},
            {"arrivals", r.arrivals},
            {"placed", r.placed},
            {"rejected", r.rejected},
            {"unscheduled", r.unscheduled},
            {"activations", r.activations},
            {"slo_violations", r.slo_violations},
            {"rtt_mean_ms", r.rtt_mean_ms},
            {"rtt_increase_mean_ms", r.rtt_increase_mean_ms},
            {"rtt_increase_median_ms", r.rtt_increase_median_ms},
            {"end_to_end_mean_ms", r.end_to_end_mean_ms}}},
          {"dc_load", r.dc_load},
          {"intervals", intervals}};
}

void write_tidy_csv(std::ostream& out, std::span<const MetricsReport> reports, bool header) {
  if (header) out << "interval_start,policy,metric,value\n";
  auto row = [&](const std::string& when, const std::string& policy, const char* metric, double v) {
    out << when << ',' << csv::quote_if_needed(policy) << ',' << metric << ',' << csv::format_number(v) << '\n';
  };
  for (const auto& r : reports) {
    for (const auto& iv : r.intervals) {
      const std::string t = format_utc(iv.start);
      row(t, r.policy, "emissions_g", iv.emissions_g());
      row(t, r.policy, "operation_g", iv.operation_g);
      row(t, r.policy, "base_g", iv.base_g);
      row(t, r.policy, "energy_kwh", iv.energy_kwh());
      row(t, r.policy, "arrivals", static_cast<double>(iv.arrivals));
      row(t, r.policy, "placed", static_cast<double>(iv.placed));
      row(t, r.policy, "rejected", static_cast<double>(iv.rejected));
      row(t, r.policy, "active_apps", static_cast<double>(iv.active_apps));
      row(t, r.policy, "powered_servers", static_cast<double>(iv.powered_servers));
    }
    row("total", r.policy, "emissions_g", r.emissions_g);
    row("total", r.policy, "operation_g", r.operation_g);
    row("total", r.policy, "base_g", r.base_g);
    row("total", r.policy, "activation_one_shot_g", r.activation_one_shot_g);
    row("total", r.policy, "energy_kwh", r.energy_kwh);
    row("total", r.policy, "arrivals", static_cast<double>(r.arrivals));
    row("total", r.policy, "placed", static_cast<double>(r.placed));
    row("total", r.policy, "rejected", static_cast<double>(r.rejected));
    row("total", r.policy, "unscheduled", static_cast<double>(r.unscheduled));
    row("total", r.policy, "activations", static_cast<double>(r.activations));
    row("total", r.policy, "slo_violations", static_cast<double>(r.slo_violations));
    row("total", r.policy, "rtt_mean_ms", r.rtt_mean_ms);
    row("total", r.policy, "rtt_increase_mean_ms", r.rtt_increase_mean_ms);
    row("total", r.policy, "rtt_increase_median_ms", r.rtt_increase_median_ms);
    row("total", r.policy, "end_to_end_mean_ms", r.end_to_end_mean_ms);
    for (const auto& [dc, n] : r.dc_load) {
      out << "total," << csv::quote_if_needed(r.policy) << ',' << csv::quote_if_needed("dc_load:" + dc) << ','
          << n << '\n';
    }
  }
}

double savings_pct(double reference, double value) {
  return reference > 0.0 ? (reference - value) / reference * 100.0 : 0.0;
}

SweepDimension parse_sweep_dimension(std::string_view name) {
  if (name == "latency_limit") return SweepDimension::kLatencyLimit;
  if (name == "alpha") return SweepDimension::kAlpha;
  if (name == "month") return SweepDimension::kMonth;
  fail(ErrorKind::kConfig, "unknown sweep dimension '" + std::string(name) + "'");
}

std::string_view to_string(SweepDimension dim) {
  switch (dim) {
    case SweepDimension::kLatencyLimit: return "latency_limit";
    case SweepDimension::kAlpha: return "alpha";
    case SweepDimension::kMonth: return "month";
  }
  return "?";
}

ScenarioConfig apply_sweep_value(const ScenarioConfig& config, SweepDimension dim, double value) {
  ScenarioConfig c = config;
  switch (dim) {
    case SweepDimension::kLatencyLimit:
      c.latency_limit_ms = value;
      break;
    case SweepDimension::kAlpha:
      c.policy.kind = PolicyKind::kTradeoff;
      c.policy.alpha = value;
      break;
    case SweepDimension::kMonth: {
      if (value < 1.0 || value > 12.0 || value != std::floor(value)) {
        fail(ErrorKind::kConfig, "month must be an integer in 1..12");
      }
      const auto length = config.end - config.start;
      c.start = month_start(year_of(config.start), static_cast<unsigned>(value));
      c.end = c.start + length;
      break;
    }
  }
  validate(c);
  return c;
}

namespace {

// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    for (std::size_t i = cursor++; i < n; i = cursor++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PolicyConfig reference_policy(const PolicyConfig& base) {
  PolicyConfig ref = base;
  ref.kind = PolicyKind::kLatencyAware;
  ref.alpha.reset();
  return ref;
}

}  // namespace

std::vector<SweepPoint> sweep(const ScenarioConfig& config, const Dataset& data, SweepDimension dim,
                              std::span<const double> values, std::size_t jobs) {
  if (values.empty()) fail(ErrorKind::kConfig, "sweep needs at least one value");
  std::vector<ScenarioConfig> configs;
  for (double v : values) {
    ScenarioConfig c = apply_sweep_value(config, dim, v);
    ScenarioConfig ref = c;
    ref.policy = reference_policy(c.policy);
    configs.push_back(std::move(c));
    configs.push_back(std::move(ref));
  }
  std::vector<MetricsReport> reports(configs.size());
  parallel_for(configs.size(), jobs, [&](std::size_t i) { reports[i] = run_scenario(configs[i], data).report; });
  std::vector<SweepPoint> points;
  for (std::size_t k = 0; k < values.size(); ++k) {
    SweepPoint p;
    p.value = values[k];
    p.report = std::move(reports[2 * k]);
    p.reference = std::move(reports[2 * k + 1]);
    p.savings_pct = savings_pct(p.reference.emissions_g, p.report.emissions_g);
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<ComparisonRow> compare_policies(const ScenarioConfig& config, const Dataset& data,
                                            std::span<const PolicyConfig> policies, std::size_t jobs) {
  if (policies.empty()) fail(ErrorKind::kConfig, "compare needs at least one policy");
  std::vector<PolicyConfig> all{reference_policy(config.policy)};
  for (const auto& p : policies) {
    if (p.kind != PolicyKind::kLatencyAware) all.push_back(p);
  }
  std::vector<MetricsReport> reports(all.size());
  parallel_for(all.size(), jobs, [&](std::size_t i) {
    ScenarioConfig c = config;
    c.policy = all[i];
    reports[i] = run_scenario(c, data).report;
  });
  std::vector<ComparisonRow> rows;
  for (auto& r : reports) {
    ComparisonRow row;
    row.policy = r.policy;
    row.savings_pct = savings_pct(reports.front().emissions_g, r.emissions_g);
    row.rtt_increase_delta_ms = r.rtt_mean_ms - reports.front().rtt_mean_ms;
    row.report = std::move(r);
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(std::span<const SweepPoint> points, SweepDimension dim) {
  json arr = json::array();
  for (const auto& p : points) {
    arr.push_back({{"value", p.value},
                   {"savings_pct", p.savings_pct},
                   {"report", to_json(p.report)},
                   {"reference", to_json(p.reference)}});
  }
  return {{"dimension", to_string(dim)}, {"points", arr}};
}

json to_json(std::span<const ComparisonRow> rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"policy", r.policy},
                   {"savings_pct", r.savings_pct},
                   {"rtt_increase_delta_ms", r.rtt_increase_delta_ms},
                   {"report", to_json(r.report)}});
  }
  return {{"reference", "latency_aware"}, {"rows", arr}};
}

void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "policy,emissions_g,energy_kwh,savings_pct,rtt_increase_mean_ms,rejected\n";
  for (const auto& r : rows) {
    out << csv::quote_if_needed(r.policy) << ',' << csv::format_number(r.report.emissions_g) << ','
        << csv::format_number(r.report.energy_kwh) << ',' << csv::format_number(r.savings_pct) << ','
        << csv::format_number(r.report.rtt_increase_mean_ms) << ',' << r.report.rejected << '\n';
  }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
  out << "value,policy,emissions_g,reference_emissions_g,savings_pct,rtt_increase_mean_ms\n";
  for (const auto& p : points) {
    out << csv::format_number(p.value) << ',' << csv::quote_if_needed(p.report.policy) << ','
        << csv::format_number(p.report.emissions_g) << ',' << csv::format_number(p.reference.emissions_g) << ','
        << csv::format_number(p.savings_pct) << ',' << csv::format_number(p.report.rtt_increase_mean_ms) << '\n';
  }
}

}  // namespace carbonedge
