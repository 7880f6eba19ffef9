#pragma once

// External data: hourly carbon-intensity traces per zone, the inter-city
// round-trip latency matrix, the data-center registry and workload profiles.
// Everything here is immutable once loaded.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "carbonedge/geo.hpp"
#include "carbonedge/timeutil.hpp"

namespace carbonedge {

// Named resource dimensions (memory-MB, compute-slots, ...). The set of
// dimensions is open; a missing key means zero.
using Resources = std::map<std::string, double>;

struct CarbonZone {
  std::string zone_id;
  std::string display_name;
};

class CarbonIntensityTrace {
 public:
  // Hourly samples starting at `start`. Throws Error(kValidation) when start is
  // not hour-aligned, the series is empty, or any sample is negative/non-finite.
  CarbonIntensityTrace(std::string zone_id, TimePoint start, std::vector<double> intensities);

  const std::string& zone_id() const { return zone_id_; }
  TimePoint start() const { return start_; }
  // Exclusive end of the last sample hour.
  TimePoint end() const { return start_ + Hours{static_cast<std::int64_t>(values_.size())}; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }

  bool covers(TimePoint from, TimePoint to) const { return from >= start_ && to <= end(); }

  // Intensity of the hour containing t. Throws Error(kData) outside the trace.
  double at(TimePoint t) const;

  // Arithmetic mean over [from, from + hours). The window is clipped to the
  // trace end; throws Error(kData) if `from` lies outside the trace.
  double mean(TimePoint from, std::size_t hours) const;

  double overall_mean() const;

 private:
  std::string zone_id_;
  TimePoint start_;
  std::vector<double> values_;
};

class CarbonRegistry {
 public:
  // Throws Error(kValidation) on an empty or duplicate zone id.
  void add(CarbonZone zone, CarbonIntensityTrace trace);

  const CarbonIntensityTrace* find(std::string_view zone_id) const;
  // Throws Error(kData) when the zone is unknown.
  const CarbonIntensityTrace& at(std::string_view zone_id) const;
  const CarbonZone& zone(std::string_view zone_id) const;

  std::size_t size() const { return traces_.size(); }
  bool empty() const { return traces_.empty(); }
  std::vector<std::string> zone_ids() const;

  auto begin() const { return traces_.begin(); }
  auto end() const { return traces_.end(); }

 private:
  std::map<std::string, CarbonIntensityTrace, std::less<>> traces_;
  std::map<std::string, CarbonZone, std::less<>> zones_;
};

enum class TraceSchema {
  kNative,           // zone_id,timestamp_utc,carbon_intensity_gco2_kwh
  kElectricityMaps,  // hourly export: "Datetime (UTC)", "Zone Id", "Carbon Intensity gCO₂eq/kWh (LCA)"
};

// Accepts "native" and "electricitymaps"; throws Error(kSchema) otherwise.
TraceSchema parse_trace_schema(std::string_view name);

struct TraceLoadOptions {
  // Linearly interpolate runs of at most `max_fill_hours` missing hours.
  bool interpolate_gaps = false;
  std::size_t max_fill_hours = 3;
  // Record malformed rows instead of failing on the first one.
  bool skip_malformed_rows = false;
};

struct RejectedRow {
  std::size_t line;
  std::string reason;
};

struct TraceLoadResult {
  CarbonRegistry registry;
  std::vector<RejectedRow> rejected;
  std::size_t filled_hours = 0;
};

TraceLoadResult load_carbon_traces(const std::filesystem::path& path,
                                   TraceSchema schema = TraceSchema::kNative,
                                   const TraceLoadOptions& options = {});

// Native schema, zones in id order, hours ascending.
void write_carbon_traces(const std::filesystem::path& path, const CarbonRegistry& registry);

class LatencyMatrix {
 public:
  static constexpr double kDefaultIntraCityFloorMs = 0.5;

  explicit LatencyMatrix(std::vector<std::string> locations,
                         double intra_city_floor_ms = kDefaultIntraCityFloorMs);

  // Stores the value for both directions. Self-pairs are ignored (the
  // diagonal is always the intra-city floor). Throws Error(kValidation) on a
  // negative or non-finite value and Error(kData) on an unknown location.
  void set_rtt(std::string_view a, std::string_view b, double rtt_ms);

  std::optional<double> find_rtt(std::string_view a, std::string_view b) const;
  // Throws Error(kData) when either location is unknown or the pair is missing.
  double rtt(std::string_view a, std::string_view b) const;
  double one_way(std::string_view a, std::string_view b) const { return rtt(a, b) / 2.0; }

  bool contains(std::string_view location) const;
  const std::vector<std::string>& locations() const { return locations_; }
  double intra_city_floor_ms() const { return floor_ms_; }
  std::size_t missing_pairs() const;

 private:
  std::optional<std::size_t> index_of(std::string_view location) const;

  std::vector<std::string> locations_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> rtt_;  // row-major, NaN = missing
  double floor_ms_;
};

enum class AsymmetryPolicy {
  kAverage,  // both directions listed: store their mean
  kReject,   // both directions listed and differ by more than 1e-9: fail
};

struct LatencyLoadOptions {
  double intra_city_floor_ms = LatencyMatrix::kDefaultIntraCityFloorMs;
  AsymmetryPolicy asymmetry = AsymmetryPolicy::kAverage;
};

// city_a,city_b,rtt_ms
LatencyMatrix load_latency_matrix(const std::filesystem::path& path,
                                  const LatencyLoadOptions& options = {});
void write_latency_matrix(const std::filesystem::path& path, const LatencyMatrix& matrix);

// rtt = distance_km * ms_per_km + offset_ms
struct LinearLatencyModel {
  double ms_per_km = 0.0;
  double offset_ms = 0.0;

  double rtt_for_km(double km) const { return km * ms_per_km + offset_ms; }
};

// Opt-in estimator for synthetic experiments: fills every missing pair from
// great-circle distance. Returns the number of pairs filled.
std::size_t fill_missing_latency(LatencyMatrix& matrix, std::span<const NamedPoint> cities,
                                 const LinearLatencyModel& model);

struct DataCenterRecord {
  std::string dc_id;
  GeoPoint location;
  std::string city_id;
  std::string zone_id;
};

class DataCenterRegistry {
 public:
  // Throws Error(kValidation) on a duplicate or empty dc_id.
  void add(DataCenterRecord record);

  const DataCenterRecord* find(std::string_view dc_id) const;
  const DataCenterRecord& at(std::string_view dc_id) const;

  const std::vector<DataCenterRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<DataCenterRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// city_id,lat,lon
std::vector<NamedPoint> load_cities(const std::filesystem::path& path);
void write_cities(const std::filesystem::path& path, std::span<const NamedPoint> cities);

// dc_id,lat,lon,zone_id; city_id is computed with map_dc_to_city.
DataCenterRegistry load_datacenters(const std::filesystem::path& path,
                                    std::span<const NamedPoint> cities);
void write_datacenters(const std::filesystem::path& path, const DataCenterRegistry& dcs);

struct ProfileRow {
  Resources demands;
  double energy_kwh_per_hour = 0.0;
  double service_time_ms = 0.0;
};

struct WorkloadProfile {
  std::string app_class;
  std::map<std::string, ProfileRow> by_device;  // device class -> measured row
};

using ProfileRegistry = std::map<std::string, WorkloadProfile>;

// {app_class: {device_class: {demands: {dim: qty}, energy_kwh_per_hour, service_time_ms}}}
ProfileRegistry parse_profiles(std::string_view json_text);
ProfileRegistry load_profiles(const std::filesystem::path& path);
std::string profiles_to_json(const ProfileRegistry& profiles);

// Problems that make a dataset unusable together: dcs whose zone has no trace
// or whose city is absent from the latency matrix, and needed city pairs with
// no latency entry. Empty means consistent.
std::vector<std::string> cross_reference_issues(const DataCenterRegistry& dcs,
                                                const LatencyMatrix& latency,
                                                const CarbonRegistry& carbon);

struct BoundingBox {
  double lat_min = 30.0;
  double lat_max = 45.0;
  double lon_min = -100.0;
  double lon_max = -75.0;
};

struct GeneratorConfig {
  std::size_t zones = 6;
  std::size_t hours = 8760;
  TimePoint start = parse_utc("2023-01-01T00:00:00Z");
  double intensity_min = 40.0;
  double intensity_max = 700.0;
  double diurnal_amplitude = 60.0;  // g/kWh peak deviation around the zone base
  double jitter = 0.25;             // uniform noise, as a fraction of the amplitude
  std::size_t dcs = 20;
  BoundingBox bbox;
  double ms_per_km = 0.035;
  double latency_offset_ms = 1.5;
  double intra_city_floor_ms = LatencyMatrix::kDefaultIntraCityFloorMs;
};

// Throws Error(kConfig) on malformed JSON or inconsistent values.
GeneratorConfig parse_generator_config(std::string_view json_text);
std::string generator_config_to_json(const GeneratorConfig& config);

struct SyntheticWorld {
  CarbonRegistry carbon;
  LatencyMatrix latency;
  std::vector<NamedPoint> cities;
  DataCenterRegistry dcs;
};

// Pure function of (config, seed). One city per data center at the same
// coordinates; each data center belongs to the zone with the nearest zone
// centre; latency follows the linear distance model.
SyntheticWorld generate_synthetic_traces(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace carbonedge
