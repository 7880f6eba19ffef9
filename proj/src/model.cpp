#include "carbonedge/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "carbonedge/error.hpp"

namespace carbonedge {

using nlohmann::json;

namespace {

void check_row(const ProfileRow& row, const std::string& where) {
  for (const auto& [dim, q] : row.demands) {
    if (!std::isfinite(q) || q < 0.0) fail(ErrorKind::kValidation, where + ": negative demand for " + dim);
  }
  if (!std::isfinite(row.energy_kwh_per_hour) || row.energy_kwh_per_hour < 0.0) {
    fail(ErrorKind::kValidation, where + ": negative energy rate");
  }
  if (!std::isfinite(row.service_time_ms) || row.service_time_ms < 0.0) {
    fail(ErrorKind::kValidation, where + ": negative service time");
  }
}

std::unordered_map<std::string_view, const ServerState*> index_servers(std::span<const ServerState> servers) {
  std::unordered_map<std::string_view, const ServerState*> index;
  index.reserve(servers.size());
  for (const auto& s : servers) index.emplace(s.server_id, &s);
  return index;
}

bool powered_in_plan(const PlacementPlan& plan, const ServerState& server) {
  auto it = plan.power_on.find(server.server_id);
  return it == plan.power_on.end() ? server.powered_on : it->second;
}

json row_to_json(const ProfileRow& row) {
  json demands = json::object();
  for (const auto& [dim, q] : row.demands) demands[dim] = q;
  return {{"demands", demands},
          {"energy_kwh_per_hour", row.energy_kwh_per_hour},
          {"service_time_ms", row.service_time_ms}};
}

ProfileRow row_from_json(const json& doc) {
  ProfileRow row;
  for (const auto& [dim, q] : doc.at("demands").items()) row.demands[dim] = q.get<double>();
  row.energy_kwh_per_hour = doc.at("energy_kwh_per_hour").get<double>();
  row.service_time_ms = doc.value("service_time_ms", 0.0);
  return row;
}

}  // namespace

void validate(const ServerState& server) {
  if (server.server_id.empty()) fail(ErrorKind::kValidation, "server with empty id");
  for (const auto& [dim, c] : server.capacities) {
    if (!std::isfinite(c) || c < 0.0) {
      fail(ErrorKind::kValidation, "server " + server.server_id + ": negative capacity for " + dim);
    }
  }
  if (!std::isfinite(server.base_power_kwh_per_h) || server.base_power_kwh_per_h < 0.0) {
    fail(ErrorKind::kValidation, "server " + server.server_id + ": negative base power");
  }
}

const ProfileRow* ApplicationRequest::row_for(const ServerState& server) const {
  if (auto it = server_rows.find(server.server_id); it != server_rows.end()) return &it->second;
  if (auto it = device_rows.find(server.device_class); it != device_rows.end()) return &it->second;
  return nullptr;
}

void validate(const ApplicationRequest& app) {
  if (app.app_id.empty()) fail(ErrorKind::kValidation, "application with empty id");
  if (!(app.latency_limit_ms > 0.0)) {
    fail(ErrorKind::kValidation, "application " + app.app_id + ": latency limit must be positive");
  }
  if (app.device_rows.empty() && app.server_rows.empty()) {
    fail(ErrorKind::kValidation, "application " + app.app_id + ": no candidate profile rows");
  }
  for (const auto& [device, row] : app.device_rows) check_row(row, app.app_id + "/" + device);
  for (const auto& [server, row] : app.server_rows) check_row(row, app.app_id + "@" + server);
}

ApplicationRequest make_request(std::string app_id, std::string origin_dc, double latency_limit_ms,
                                TimePoint arrival, const WorkloadProfile& profile,
                                std::span<const std::string> device_classes) {
  ApplicationRequest app;
  app.app_id = std::move(app_id);
  app.app_class = profile.app_class;
  app.origin_dc = std::move(origin_dc);
  app.latency_limit_ms = latency_limit_ms;
  app.arrival_time = arrival;
  for (const auto& [device, row] : profile.by_device) {
    if (device_classes.empty() ||
        std::find(device_classes.begin(), device_classes.end(), device) != device_classes.end()) {
      app.device_rows.emplace(device, row);
    }
  }
  validate(app);
  return app;
}

double Topology::rtt_ms(std::string_view from_dc, std::string_view to_dc) const {
  const auto& a = dcs_->at(from_dc);
  const auto& b = dcs_->at(to_dc);
  if (a.dc_id == b.dc_id || a.city_id == b.city_id) {
    if (!latency_->contains(a.city_id)) {
      fail(ErrorKind::kData, "city " + a.city_id + " is not in the latency matrix");
    }
    return latency_->intra_city_floor_ms();
  }
  return latency_->rtt(a.city_id, b.city_id);
}

double latency_of(const ApplicationRequest& app, const ServerState& server, const Topology& topology) {
  return topology.rtt_ms(app.origin_dc, server.dc_id);
}

ForecastWindow make_forecast(const CarbonIntensityTrace& trace, TimePoint start, std::size_t horizon_hours) {
  return {trace.zone_id(), start, horizon_hours, trace.mean(start, horizon_hours)};
}

void IntensityForecasts::set(ForecastWindow window) {
  std::string id = window.zone_id;
  windows_.insert_or_assign(std::move(id), std::move(window));
}

const ForecastWindow& IntensityForecasts::at(std::string_view zone_id) const {
  auto it = windows_.find(zone_id);
  if (it == windows_.end()) fail(ErrorKind::kData, "no intensity forecast for zone " + std::string(zone_id));
  return it->second;
}

IntensityForecasts IntensityForecasts::build(const CarbonRegistry& carbon, TimePoint start,
                                             std::size_t horizon_hours) {
  IntensityForecasts forecasts;
  for (const auto& [zone, trace] : carbon) forecasts.set(make_forecast(trace, start, horizon_hours));
  return forecasts;
}

IntensityForecasts IntensityForecasts::scaled(double factor) const {
  IntensityForecasts out = *this;
  for (auto& [zone, window] : out.windows_) window.mean_intensity *= factor;
  return out;
}

json to_json(const PlacementPlan& plan) {
  json assignments = json::object();
  for (const auto& [app, server] : plan.assignments) assignments[app] = server;
  json power = json::object();
  for (const auto& [server, on] : plan.power_on) power[server] = on;
  return {{"assignments", assignments},
          {"power_on", power},
          {"emissions_g",
           {{"operation", plan.operation_emissions_g}, {"activation", plan.activation_emissions_g}}},
          {"energy_kwh", plan.total_energy_kwh}};
}

PlacementPlan plan_from_json(const json& doc) {
  PlacementPlan plan;
  try {
    for (const auto& [app, server] : doc.at("assignments").items()) {
      plan.assignments[app] = server.get<std::string>();
    }
    for (const auto& [server, on] : doc.at("power_on").items()) plan.power_on[server] = on.get<bool>();
    if (doc.contains("emissions_g")) {
      plan.operation_emissions_g = doc["emissions_g"].value("operation", 0.0);
      plan.activation_emissions_g = doc["emissions_g"].value("activation", 0.0);
    }
    plan.total_energy_kwh = doc.value("energy_kwh", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("placement plan JSON: ") + e.what());
  }
  return plan;
}

EmissionBreakdown plan_emissions(const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                                 std::span<const ServerState> servers, const Topology& topology,
                                 const IntensityForecasts& forecasts, double duration_hours) {
  const auto index = index_servers(servers);
  EmissionBreakdown out;
  for (const auto& app : apps) {
    auto it = plan.assignments.find(app.app_id);
    if (it == plan.assignments.end()) continue;
    auto s = index.find(it->second);
    if (s == index.end()) fail(ErrorKind::kData, "plan references unknown server " + it->second);
    const ProfileRow* row = app.row_for(*s->second);
    if (row == nullptr) {
      fail(ErrorKind::kData, "application " + app.app_id + " has no profile for server " + it->second);
    }
    const double intensity = forecasts.mean(topology.zone_of(s->second->dc_id));
    out.operation_g += row->energy_kwh_per_hour * duration_hours * intensity;
  }
  for (const auto& server : servers) {
    if (server.powered_on || !powered_in_plan(plan, server)) continue;
    const double intensity = forecasts.mean(topology.zone_of(server.dc_id));
    out.activation_g += server.base_power_kwh_per_h * duration_hours * intensity;
  }
  return out;
}

double plan_energy(const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                   std::span<const ServerState> servers, double duration_hours) {
  const auto index = index_servers(servers);
  double energy = 0.0;
  for (const auto& app : apps) {
    auto it = plan.assignments.find(app.app_id);
    if (it == plan.assignments.end()) continue;
    auto s = index.find(it->second);
    if (s == index.end()) fail(ErrorKind::kData, "plan references unknown server " + it->second);
    const ProfileRow* row = app.row_for(*s->second);
    if (row == nullptr) {
      fail(ErrorKind::kData, "application " + app.app_id + " has no profile for server " + it->second);
    }
    energy += row->energy_kwh_per_hour * duration_hours;
  }
  for (const auto& server : servers) {
    if (!server.powered_on && powered_in_plan(plan, server)) {
      energy += server.base_power_kwh_per_h * duration_hours;
    }
  }
  return energy;
}

void annotate(PlacementPlan& plan, std::span<const ApplicationRequest> apps,
              std::span<const ServerState> servers, const Topology& topology,
              const IntensityForecasts& forecasts, double duration_hours) {
  const auto e = plan_emissions(plan, apps, servers, topology, forecasts, duration_hours);
  plan.operation_emissions_g = e.operation_g;
  plan.activation_emissions_g = e.activation_g;
  plan.total_energy_kwh = plan_energy(plan, apps, servers, duration_hours);
}

std::string_view to_string(Constraint c) {
  switch (c) {
    case Constraint::kReference: return "reference";
    case Constraint::kCapacity: return "capacity";
    case Constraint::kLatency: return "latency";
    case Constraint::kPlacement: return "placement";
    case Constraint::kPowerMonotone: return "power_monotone";
    case Constraint::kActiveServer: return "active_server";
  }
  return "unknown";
}

bool capacity_exceeded(double used, double capacity) {
  return used > capacity + 1e-9 * std::max(1.0, std::abs(capacity));
}

std::vector<Violation> check_feasible(const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                                      std::span<const ServerState> servers, const Topology& topology,
                                      const IntensityForecasts* forecasts) {
  std::vector<Violation> out;
  const auto index = index_servers(servers);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  // Assignments for apps outside the batch are placement violations too.
  std::set<std::string_view> batch_ids;
  for (const auto& app : apps) batch_ids.insert(app.app_id);
  for (const auto& [app_id, server_id] : plan.assignments) {
    if (!batch_ids.contains(app_id)) {
      out.push_back({Constraint::kPlacement, app_id, server_id, "", 1.0,
                     "assignment for an application outside the batch"});
    }
  }

  std::map<std::string_view, Resources> used;
  for (const auto& app : apps) {
    auto it = plan.assignments.find(app.app_id);
    if (it == plan.assignments.end()) {
      out.push_back({Constraint::kPlacement, app.app_id, "", "", 1.0, "application is not placed"});
      continue;
    }
    auto s = index.find(it->second);
    if (s == index.end()) {
      out.push_back({Constraint::kReference, app.app_id, it->second, "", nan, "unknown server"});
      continue;
    }
    const ServerState& server = *s->second;
    const ProfileRow* row = app.row_for(server);
    if (row == nullptr) {
      out.push_back({Constraint::kReference, app.app_id, server.server_id, "", nan,
                     "no profile row for device class " + server.device_class});
      continue;
    }
    try {
      const double rtt = latency_of(app, server, topology);
      if (rtt > app.latency_limit_ms) {
        out.push_back({Constraint::kLatency, app.app_id, server.server_id, "", rtt - app.latency_limit_ms,
                       "round-trip latency exceeds the limit"});
      }
    } catch (const Error& e) {
      out.push_back({Constraint::kReference, app.app_id, server.server_id, "", nan, e.what()});
    }
    if (!powered_in_plan(plan, server)) {
      out.push_back({Constraint::kActiveServer, app.app_id, server.server_id, "", 1.0,
                     "assigned to a powered-off server"});
    }
    auto& load = used[server.server_id];
    for (const auto& [dim, q] : row->demands) load[dim] += q;
  }

  for (const auto& server : servers) {
    const bool on = powered_in_plan(plan, server);
    if (server.powered_on && !on) {
      out.push_back({Constraint::kPowerMonotone, "", server.server_id, "", 1.0,
                     "powered-on server switched off"});
    }
    if (forecasts != nullptr && on) {
      try {
        forecasts->at(topology.zone_of(server.dc_id));
      } catch (const Error& e) {
        out.push_back({Constraint::kReference, "", server.server_id, "", nan, e.what()});
      }
    }
    auto it = used.find(server.server_id);
    if (it == used.end()) continue;
    for (const auto& [dim, q] : it->second) {
      auto cap_it = server.capacities.find(dim);
      const double cap = on && cap_it != server.capacities.end() ? cap_it->second : 0.0;
      if (capacity_exceeded(q, cap)) {
        out.push_back({Constraint::kCapacity, "", server.server_id, dim, q - cap,
                       "aggregate demand exceeds available capacity"});
      }
    }
  }
  for (const auto& [server_id, on] : plan.power_on) {
    if (!index.contains(server_id)) {
      out.push_back({Constraint::kReference, "", server_id, "", nan, "power state for unknown server"});
    }
  }
  return out;
}

json to_json(const ApplicationRequest& app) {
  json device = json::object();
  for (const auto& [d, row] : app.device_rows) device[d] = row_to_json(row);
  json server = json::object();
  for (const auto& [s, row] : app.server_rows) server[s] = row_to_json(row);
  return {{"app_id", app.app_id},
          {"app_class", app.app_class},
          {"origin_dc", app.origin_dc},
          {"latency_limit_ms", app.latency_limit_ms},
          {"arrival_time", format_utc(app.arrival_time)},
          {"device_rows", device},
          {"server_rows", server}};
}

ApplicationRequest request_from_json(const json& doc) {
  ApplicationRequest app;
  try {
    app.app_id = doc.at("app_id").get<std::string>();
    app.app_class = doc.value("app_class", "");
    app.origin_dc = doc.at("origin_dc").get<std::string>();
    app.latency_limit_ms = doc.at("latency_limit_ms").get<double>();
    app.arrival_time = parse_utc(doc.at("arrival_time").get<std::string>());
    const json device = doc.value("device_rows", json::object());
    for (const auto& [d, row] : device.items()) app.device_rows[d] = row_from_json(row);
    const json server = doc.value("server_rows", json::object());
    for (const auto& [s, row] : server.items()) {
      app.server_rows[s] = row_from_json(row);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("application JSON: ") + e.what());
  }
  validate(app);
  return app;
}

json to_json(const ServerState& server) {
  json caps = json::object();
  for (const auto& [dim, c] : server.capacities) caps[dim] = c;
  return {{"server_id", server.server_id},
          {"dc_id", server.dc_id},
          {"device_class", server.device_class},
          {"capacities", caps},
          {"base_power_kwh_per_h", server.base_power_kwh_per_h},
          {"powered_on", server.powered_on}};
}

ServerState server_from_json(const json& doc) {
  ServerState s;
  try {
    s.server_id = doc.at("server_id").get<std::string>();
    s.dc_id = doc.at("dc_id").get<std::string>();
    s.device_class = doc.value("device_class", "");
    for (const auto& [dim, c] : doc.at("capacities").items()) s.capacities[dim] = c.get<double>();
    s.base_power_kwh_per_h = doc.value("base_power_kwh_per_h", 0.0);
    s.powered_on = doc.value("powered_on", false);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("server JSON: ") + e.what());
  }
  validate(s);
  return s;
}

}  // namespace carbonedge
