#pragma once

// Domain types of the placement problem and the emission/energy accounting
// over a placement, independent of how the placement was found.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carbonedge/timeutil.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge {

struct ServerState {
  std::string server_id;
  std::string dc_id;
  std::string device_class;
  Resources capacities;                // available capacity per dimension
  double base_power_kwh_per_h = 0.0;   // draw while powered on, idle or not
  bool powered_on = false;             // power state before the current round

  friend bool operator==(const ServerState&, const ServerState&) = default;
};

// Throws Error(kValidation) on an empty id or a negative capacity/base power.
void validate(const ServerState& server);

struct ApplicationRequest {
  std::string app_id;
  std::string app_class;
  std::string origin_dc;
  double latency_limit_ms = 0.0;  // round-trip
  TimePoint arrival_time{};
  // Demands and energy rate when hosted on a server of the given device class.
  std::map<std::string, ProfileRow> device_rows;
  // Per-server overrides; take precedence over device_rows.
  std::map<std::string, ProfileRow> server_rows;

  // Row that applies on `server`, or nullptr if the app cannot run there.
  const ProfileRow* row_for(const ServerState& server) const;
};

// Throws Error(kValidation) unless the limit is positive, every quantity is
// non-negative and at least one row is present.
void validate(const ApplicationRequest& app);

// Builds a request from a workload profile, optionally restricted to a
// subset of device classes (empty = all classes in the profile).
ApplicationRequest make_request(std::string app_id, std::string origin_dc, double latency_limit_ms,
                                TimePoint arrival, const WorkloadProfile& profile,
                                std::span<const std::string> device_classes = {});

// Latency and zone lookups for data centers. Non-owning: the matrix and the
// registry must outlive the topology.
class Topology {
 public:
  Topology(const LatencyMatrix& latency, const DataCenterRegistry& dcs)
      : latency_(&latency), dcs_(&dcs) {}

  // Round-trip time between the cities of two data centers; the same data
  // center (or city) yields the intra-city floor. Throws Error(kData) when a
  // data center or the city pair cannot be resolved.
  double rtt_ms(std::string_view from_dc, std::string_view to_dc) const;
  const std::string& zone_of(std::string_view dc_id) const { return dcs_->at(dc_id).zone_id; }

  const LatencyMatrix& latency() const { return *latency_; }
  const DataCenterRegistry& datacenters() const { return *dcs_; }

 private:
  const LatencyMatrix* latency_;
  const DataCenterRegistry* dcs_;
};

double latency_of(const ApplicationRequest& app, const ServerState& server, const Topology& topology);

struct ForecastWindow {
  std::string zone_id;
  TimePoint start{};
  std::size_t horizon_hours = 1;
  double mean_intensity = 0.0;
};

// Perfect-hindsight forecast: mean of the trace over [start, start + horizon),
// clipped at the trace end.
ForecastWindow make_forecast(const CarbonIntensityTrace& trace, TimePoint start, std::size_t horizon_hours);

class IntensityForecasts {
 public:
  void set(ForecastWindow window);
  // Throws Error(kData) for a zone without a forecast.
  const ForecastWindow& at(std::string_view zone_id) const;
  bool contains(std::string_view zone_id) const { return windows_.find(zone_id) != windows_.end(); }
  double mean(std::string_view zone_id) const { return at(zone_id).mean_intensity; }

  // One window per zone in the registry.
  static IntensityForecasts build(const CarbonRegistry& carbon, TimePoint start, std::size_t horizon_hours);
  // Every mean multiplied by `factor`.
  IntensityForecasts scaled(double factor) const;

 private:
  std::map<std::string, ForecastWindow, std::less<>> windows_;
};

struct PlacementPlan {
  std::map<std::string, std::string> assignments;  // app_id -> server_id
  std::map<std::string, bool> power_on;            // server_id -> y
  double operation_emissions_g = 0.0;
  double activation_emissions_g = 0.0;
  double total_energy_kwh = 0.0;
};

nlohmann::json to_json(const PlacementPlan& plan);
PlacementPlan plan_from_json(const nlohmann::json& doc);

struct EmissionBreakdown {
  double operation_g = 0.0;
  double activation_g = 0.0;
  double total() const { return operation_g + activation_g; }
};

// Emissions of `plan` with every rate multiplied by `duration_hours`:
//   operation  = sum_i E_ij * duration * I_j            (app order)
//   activation = sum_j (y_j - y_curr_j) * B_j * duration * I_j   (server order)
// Throws Error(kData) when a server's zone has no forecast or an assignment
// cannot be resolved.
EmissionBreakdown plan_emissions(const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                                 std::span<const ServerState> servers, const Topology& topology,
                                 const IntensityForecasts& forecasts, double duration_hours);

// App energy plus base energy of newly activated servers over the duration.
double plan_energy(const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                   std::span<const ServerState> servers, double duration_hours);

// Fills the emission and energy fields of `plan`.
void annotate(PlacementPlan& plan, std::span<const ApplicationRequest> apps,
              std::span<const ServerState> servers, const Topology& topology,
              const IntensityForecasts& forecasts, double duration_hours);

enum class Constraint {
  kReference = 0,      // unknown server, missing profile row or forecast
  kCapacity = 1,       // sum_i x_ij R_ij^k <= y_j C_j^k
  kLatency = 2,        // x_ij L_ij <= l_i
  kPlacement = 3,      // sum_j x_ij = 1
  kPowerMonotone = 4,  // y_curr_j <= y_j
  kActiveServer = 5,   // x_ij <= y_j
};

std::string_view to_string(Constraint c);

struct Violation {
  Constraint constraint;
  std::string app_id;
  std::string server_id;
  std::string dimension;
  double margin = 0.0;  // amount by which the constraint is exceeded
  std::string message;
};

// Capacity comparisons allow a relative slack of 1e-9.
std::vector<Violation> check_feasible(const PlacementPlan& plan, std::span<const ApplicationRequest> apps,
                                      std::span<const ServerState> servers, const Topology& topology,
                                      const IntensityForecasts* forecasts = nullptr);

bool capacity_exceeded(double used, double capacity);

nlohmann::json to_json(const ApplicationRequest& app);
ApplicationRequest request_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ServerState& server);
ServerState server_from_json(const nlohmann::json& doc);

}  // namespace carbonedge
