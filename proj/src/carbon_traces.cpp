#include <algorithm>
#include <cmath>
#include <fstream>

#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/kernels.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge {

CarbonIntensityTrace::CarbonIntensityTrace(std::string zone_id, TimePoint start,
                                           std::vector<double> intensities)
    : zone_id_(std::move(zone_id)), start_(start), values_(std::move(intensities)) {
  if (zone_id_.empty()) fail(ErrorKind::kValidation, "carbon trace with empty zone id");
  if (!is_hour_aligned(start_)) {
    fail(ErrorKind::kValidation, "zone " + zone_id_ + ": start " + format_utc(start_) +
                                     " is not on an hour boundary");
  }
  if (values_.empty()) fail(ErrorKind::kValidation, "zone " + zone_id_ + ": empty trace");
  for (std::size_t h = 0; h < values_.size(); ++h) {
    if (!std::isfinite(values_[h]) || values_[h] < 0.0) {
      fail(ErrorKind::kValidation,
           "zone " + zone_id_ + ": invalid intensity at " +
               format_utc(start_ + Hours{static_cast<std::int64_t>(h)}));
    }
  }
}

double CarbonIntensityTrace::at(TimePoint t) const {
  if (t < start_ || t >= end()) {
    fail(ErrorKind::kData, "zone " + zone_id_ + ": no intensity for " + format_utc(t));
  }
  return values_[static_cast<std::size_t>((t - start_).count() / 3600)];
}

double CarbonIntensityTrace::mean(TimePoint from, std::size_t hours) const {
  if (hours == 0) fail(ErrorKind::kPrecondition, "forecast horizon must be at least one hour");
  if (from < start_ || from >= end()) {
    fail(ErrorKind::kData, "zone " + zone_id_ + ": no intensity for " + format_utc(from));
  }
  const auto first = static_cast<std::size_t>((floor_hour(from) - start_).count() / 3600);
  const std::size_t count = std::min(hours, values_.size() - first);
  return kernels::mean(std::span<const double>(values_).subspan(first, count));
}

double CarbonIntensityTrace::overall_mean() const { return kernels::mean(values_); }

void CarbonRegistry::add(CarbonZone zone, CarbonIntensityTrace trace) {
  if (zone.zone_id.empty()) fail(ErrorKind::kValidation, "empty zone id");
  if (zone.zone_id != trace.zone_id()) {
    fail(ErrorKind::kValidation, "zone id mismatch: " + zone.zone_id + " vs " + trace.zone_id());
  }
  if (traces_.contains(zone.zone_id)) {
    fail(ErrorKind::kValidation, "duplicate zone id " + zone.zone_id);
  }
  const std::string id = zone.zone_id;
  zones_.emplace(id, std::move(zone));
  traces_.emplace(id, std::move(trace));
}

const CarbonIntensityTrace* CarbonRegistry::find(std::string_view zone_id) const {
  auto it = traces_.find(zone_id);
  return it == traces_.end() ? nullptr : &it->second;
}

const CarbonIntensityTrace& CarbonRegistry::at(std::string_view zone_id) const {
  const auto* trace = find(zone_id);
  if (trace == nullptr) fail(ErrorKind::kData, "unknown carbon zone " + std::string(zone_id));
  return *trace;
}

const CarbonZone& CarbonRegistry::zone(std::string_view zone_id) const {
  auto it = zones_.find(zone_id);
  if (it == zones_.end()) fail(ErrorKind::kData, "unknown carbon zone " + std::string(zone_id));
  return it->second;
}

std::vector<std::string> CarbonRegistry::zone_ids() const {
  std::vector<std::string> ids;
  ids.reserve(traces_.size());
  for (const auto& [id, trace] : traces_) ids.push_back(id);
  return ids;
}

TraceSchema parse_trace_schema(std::string_view name) {
  if (name == "native") return TraceSchema::kNative;
  if (name == "electricitymaps") return TraceSchema::kElectricityMaps;
  fail(ErrorKind::kSchema, "unknown trace schema '" + std::string(name) + "'");
}

namespace {

struct Sample {
  TimePoint t;
  double value;
  std::size_t line;
};

struct Columns {
  std::size_t zone;
  std::size_t time;
  std::size_t value;
  std::optional<std::size_t> display;
};

Columns resolve_columns(const csv::Reader& reader, TraceSchema schema,
                        const std::filesystem::path& path) {
  auto require = [&](std::initializer_list<std::string_view> names) -> std::size_t {
    for (auto name : names) {
      if (auto idx = reader.column(name)) return *idx;
    }
    fail(ErrorKind::kSchema, path.string() + ": missing column '" + std::string(*names.begin()) + "'");
  };
  if (schema == TraceSchema::kNative) {
    return {require({"zone_id"}), require({"timestamp_utc"}),
            require({"carbon_intensity_gco2_kwh"}), std::nullopt};
  }
  return {require({"Zone Id"}), require({"Datetime (UTC)"}),
          require({"Carbon Intensity gCO₂eq/kWh (LCA)", "Carbon Intensity gCO2eq/kWh (LCA)",
                   "Carbon Intensity gCO₂eq/kWh (direct)", "Carbon Intensity gCO2eq/kWh (direct)"}),
          reader.column("Zone Name")};
}

CarbonIntensityTrace assemble(const std::string& zone, std::vector<Sample>& samples,
                              const TraceLoadOptions& options, std::size_t& filled) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const Sample& a, const Sample& b) { return a.t < b.t; });
  std::vector<double> values;
  values.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Sample& s = samples[k];
    if (!is_hour_aligned(s.t)) {
      fail(ErrorKind::kValidation, "zone " + zone + ": non-hourly timestamp " + format_utc(s.t) +
                                       " (line " + std::to_string(s.line) + ")");
    }
    if (k > 0) {
      const Sample& prev = samples[k - 1];
      if (s.t == prev.t) {
        fail(ErrorKind::kValidation,
             "zone " + zone + ": duplicate timestamp at hour " + format_utc(s.t));
      }
      const auto step = (s.t - prev.t).count() / 3600;
      if (step > 1) {
        const auto missing = static_cast<std::size_t>(step - 1);
        if (!options.interpolate_gaps || missing > options.max_fill_hours) {
          fail(ErrorKind::kValidation, "zone " + zone + ": gap of " + std::to_string(missing) +
                                           " hour(s) starting at hour " +
                                           format_utc(prev.t + Hours{1}));
        }
        for (std::size_t m = 1; m <= missing; ++m) {
          const double w = static_cast<double>(m) / static_cast<double>(step);
          values.push_back(prev.value + (s.value - prev.value) * w);
        }
        filled += missing;
      }
    }
    values.push_back(s.value);
  }
  return CarbonIntensityTrace(zone, samples.front().t, std::move(values));
}

}  // namespace

TraceLoadResult load_carbon_traces(const std::filesystem::path& path, TraceSchema schema,
                                   const TraceLoadOptions& options) {
  csv::Reader reader(path);
  const Columns cols = resolve_columns(reader, schema, path);
  const std::size_t width = std::max({cols.zone, cols.time, cols.value}) + 1;

  TraceLoadResult result;
  std::map<std::string, std::vector<Sample>> by_zone;
  std::map<std::string, std::string> display;
  std::vector<std::string> fields;

  auto reject = [&](const std::string& reason) {
    const std::string msg = path.filename().string() + " line " +
                            std::to_string(reader.line_number()) + ": " + reason;
    if (!options.skip_malformed_rows) fail(ErrorKind::kParse, msg);
    result.rejected.push_back({reader.line_number(), reason});
  };

  while (reader.next(fields)) {
    if (fields.size() < width) {
      reject("expected at least " + std::to_string(width) + " fields, got " +
             std::to_string(fields.size()));
      continue;
    }
    const std::string& zone = fields[cols.zone];
    if (zone.empty()) {
      reject("empty zone id");
      continue;
    }
    TimePoint t;
    try {
      t = parse_utc(fields[cols.time]);
    } catch (const Error& e) {
      reject(e.what());
      continue;
    }
    const auto value = csv::parse_number(fields[cols.value]);
    if (!value || !std::isfinite(*value) || *value < 0.0) {
      reject("invalid intensity '" + fields[cols.value] + "'");
      continue;
    }
    by_zone[zone].push_back({t, *value, reader.line_number()});
    if (cols.display && *cols.display < fields.size()) display[zone] = fields[*cols.display];
  }

  for (auto& [zone, samples] : by_zone) {
    auto trace = assemble(zone, samples, options, result.filled_hours);
    auto it = display.find(zone);
    result.registry.add({zone, it == display.end() ? zone : it->second}, std::move(trace));
  }
  return result;
}

void write_carbon_traces(const std::filesystem::path& path, const CarbonRegistry& registry) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write " + path.string());
  out << "zone_id,timestamp_utc,carbon_intensity_gco2_kwh\n";
  for (const auto& [zone, trace] : registry) {
    const auto values = trace.values();
    for (std::size_t h = 0; h < values.size(); ++h) {
      out << csv::quote_if_needed(zone) << ','
          << format_utc(trace.start() + Hours{static_cast<std::int64_t>(h)}) << ','
          << csv::format_number(values[h]) << '\n';
    }
  }
}

}  // namespace carbonedge
