#pragma once

// Trace-driven simulation: seeded arrivals are batched, placed round by round
// against a persistent cluster, and charged hour by hour at the realized
// intensity of each hour.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "carbonedge/incremental.hpp"
#include "carbonedge/policies.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge {

enum class ArrivalKind {
  kUniform,     // rate_per_hour at every data center
  kPopulation,  // rate_per_hour in total, split by weights
  kExplicit,    // listed events only
};

struct ArrivalEvent {
  TimePoint time{};
  std::string dc_id;
  std::string app_class;
};

struct ArrivalModel {
  ArrivalKind kind = ArrivalKind::kUniform;
  double rate_per_hour = 0.0;
  std::map<std::string, double> weights;  // dc_id -> share, sums to 1
  std::vector<ArrivalEvent> events;
};

enum class CapacityKind { kHomogeneous, kPopulation };

struct CapacityModel {
  CapacityKind kind = CapacityKind::kHomogeneous;
  std::size_t servers_per_dc = 1;
  std::size_t total_servers = 0;
  std::map<std::string, double> weights;
};

struct DeviceClass {
  Resources capacities;
  double base_power_kwh_per_h = 0.0;
};

struct WorkloadShare {
  std::string app_class;
  double weight = 1.0;
  std::vector<std::string> device_classes;  // empty = every class in the profile
};

enum class LifetimeKind { kForever, kFixed, kExponential };

struct LifetimeModel {
  LifetimeKind kind = LifetimeKind::kForever;
  double hours = 0.0;  // fixed duration or exponential mean
};

struct DataPaths {
  std::filesystem::path carbon;
  std::string carbon_schema = "native";
  bool interpolate_gaps = false;
  std::filesystem::path latency;
  std::filesystem::path cities;
  std::filesystem::path datacenters;
  std::filesystem::path profiles;
};

struct ScenarioConfig {
  TimePoint start{};
  TimePoint end{};
  std::uint64_t seed = 1;
  double batch_interval_minutes = 5.0;
  double latency_limit_ms = 20.0;
  std::size_t forecast_horizon_hours = 24;
  ArrivalModel arrivals;
  CapacityModel capacity;
  std::map<std::string, DeviceClass> device_classes;
  std::vector<std::string> device_mix;  // assigned round-robin within each data center
  double initially_on = 0.0;            // fraction of each data center's servers
  std::vector<WorkloadShare> workload_mix;
  LifetimeModel lifetime;
  PolicyConfig policy;
  DataPaths data;
};

// Throws Error(kConfig) on inconsistent values.
void validate(const ScenarioConfig& config);
// Throws Error(kConfig) on malformed JSON, unknown keys or invalid values.
ScenarioConfig scenario_from_json(const nlohmann::json& doc);
ScenarioConfig load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const ScenarioConfig& config);

struct Dataset {
  CarbonRegistry carbon;
  std::unique_ptr<LatencyMatrix> latency;
  std::vector<NamedPoint> cities;
  DataCenterRegistry dcs;
  ProfileRegistry profiles;
  std::map<std::string, std::string> fingerprints;  // role -> FNV-1a of the file bytes
};

// 64-bit FNV-1a of the file contents, as 16 hex digits.
std::string fingerprint_file(const std::filesystem::path& path);

// Relative paths resolve against base_dir.
Dataset load_dataset(const DataPaths& paths, const std::filesystem::path& base_dir);

// Splits `total` by weights with the largest-remainder method; ties go to the
// earlier entry.
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights);

// Servers in data-center registry order, "<dc>/s<k>".
std::vector<ServerState> build_servers(const ScenarioConfig& config, const DataCenterRegistry& dcs);

struct Arrival {
  std::string app_id;
  std::string origin_dc;
  TimePoint time{};
  std::string app_class;
  std::vector<std::string> device_classes;
  double lifetime_hours = 0.0;  // infinity for kForever
};

// Pure function of (config, dcs); ordered by time, then data-center order.
std::vector<Arrival> generate_arrivals(const ScenarioConfig& config, const DataCenterRegistry& dcs);

struct PlacementRecord {
  std::string app_id;
  std::string server_id;
  std::string dc_id;
  std::string zone_id;
  TimePoint start{};
  TimePoint end{};
  double energy_kwh_per_hour = 0.0;
  double rtt_ms = 0.0;
  double min_rtt_ms = 0.0;  // nearest server that could host the app at all
  double latency_limit_ms = 0.0;
  double service_time_ms = 0.0;
};

struct ActivationRecord {
  std::string server_id;
  std::string zone_id;
  TimePoint time{};
  double base_power_kwh_per_h = 0.0;
  bool initial = false;  // powered at the horizon start
};

struct IntervalMetrics {
  TimePoint start{};
  double operation_g = 0.0;
  double base_g = 0.0;
  double operation_kwh = 0.0;
  double base_kwh = 0.0;
  std::size_t arrivals = 0;
  std::size_t placed = 0;
  std::size_t rejected = 0;
  std::size_t active_apps = 0;
  std::size_t powered_servers = 0;

  double emissions_g() const { return operation_g + base_g; }
  double energy_kwh() const { return operation_kwh + base_kwh; }
};

struct MetricsReport {
  std::string policy;
  std::vector<IntervalMetrics> intervals;  // hourly
  double operation_g = 0.0;
  double base_g = 0.0;
  double emissions_g = 0.0;
  double operation_kwh = 0.0;
  double base_kwh = 0.0;
  double energy_kwh = 0.0;
  // One hour of base power at the activation hour, per activation.
  double activation_one_shot_g = 0.0;
  std::size_t arrivals = 0;
  std::size_t placed = 0;
  std::size_t rejected = 0;
  std::size_t unscheduled = 0;  // arrived in a window that closes after the horizon
  std::size_t activations = 0;
  std::size_t slo_violations = 0;
  double rtt_mean_ms = 0.0;
  double rtt_increase_mean_ms = 0.0;
  double rtt_increase_median_ms = 0.0;
  double end_to_end_mean_ms = 0.0;  // rtt + service time
  std::map<std::string, std::size_t> dc_load;
};

nlohmann::json to_json(const MetricsReport& report);
// interval_start,policy,metric,value; totals use interval_start "total".
void write_tidy_csv(std::ostream& out, std::span<const MetricsReport> reports, bool header = true);

struct RunResult {
  MetricsReport report;
  std::vector<PlacementRecord> placements;
  std::vector<ActivationRecord> activations;
  std::vector<BatchRound> rounds;
};

std::string policy_label(const PolicyConfig& policy);

// Throws Error(kData) before simulating when a trace does not cover the
// horizon, a profile is missing or the data sets do not cross-reference.
RunResult run_scenario(const ScenarioConfig& config, const Dataset& data);

// (reference - value) / reference * 100; 0 for a zero reference.
double savings_pct(double reference, double value);

enum class SweepDimension { kLatencyLimit, kAlpha, kMonth };

// Accepts "latency_limit", "alpha" and "month"; throws Error(kConfig).
SweepDimension parse_sweep_dimension(std::string_view name);
std::string_view to_string(SweepDimension dim);

struct SweepPoint {
  double value = 0.0;
  MetricsReport report;
  MetricsReport reference;  // latency_aware under the same settings
  double savings_pct = 0.0;
};

// Alpha switches the policy to tradeoff. Month m keeps the horizon length and
// moves its start to the first instant of month m of the configured year.
ScenarioConfig apply_sweep_value(const ScenarioConfig& config, SweepDimension dim, double value);

std::vector<SweepPoint> sweep(const ScenarioConfig& config, const Dataset& data, SweepDimension dim,
                              std::span<const double> values, std::size_t jobs = 1);

struct ComparisonRow {
  std::string policy;
  MetricsReport report;
  double savings_pct = 0.0;          // vs latency_aware
  double rtt_increase_delta_ms = 0.0;  // mean rtt minus latency_aware's
};

// The latency_aware reference is always part of the table (first row).
std::vector<ComparisonRow> compare_policies(const ScenarioConfig& config, const Dataset& data,
                                            std::span<const PolicyConfig> policies, std::size_t jobs = 1);

nlohmann::json to_json(std::span<const SweepPoint> points, SweepDimension dim);
nlohmann::json to_json(std::span<const ComparisonRow> rows);
// policy,emissions_g,energy_kwh,savings_pct,rtt_increase_mean_ms,rejected
void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows);
// value,policy,emissions_g,reference_emissions_g,savings_pct,rtt_increase_mean_ms
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);

}  // namespace carbonedge
