#include <cmath>
#include <numbers>
#include <set>

#include <json.hpp>

#include "carbonedge/error.hpp"
#include "carbonedge/rng.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge {

using nlohmann::json;

namespace {

void check_config(const GeneratorConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::kConfig, std::string("generator config: ") + what);
  };
  require(c.zones >= 1, "zones must be >= 1");
  require(c.hours >= 1, "hours must be >= 1");
  require(is_hour_aligned(c.start), "start must be on an hour boundary");
  require(std::isfinite(c.intensity_min) && c.intensity_min >= 0.0, "intensity_min must be >= 0");
  require(std::isfinite(c.intensity_max) && c.intensity_max >= c.intensity_min,
          "intensity_max must be >= intensity_min");
  require(std::isfinite(c.diurnal_amplitude) && c.diurnal_amplitude >= 0.0,
          "diurnal_amplitude must be >= 0");
  require(std::isfinite(c.jitter) && c.jitter >= 0.0, "jitter must be >= 0");
  require(c.bbox.lat_min >= -90.0 && c.bbox.lat_max <= 90.0 && c.bbox.lat_min <= c.bbox.lat_max,
          "bbox latitude range invalid");
  require(c.bbox.lon_min >= -180.0 && c.bbox.lon_max <= 180.0 && c.bbox.lon_min <= c.bbox.lon_max,
          "bbox longitude range invalid");
  require(std::isfinite(c.ms_per_km) && c.ms_per_km >= 0.0, "ms_per_km must be >= 0");
  require(std::isfinite(c.latency_offset_ms) && c.latency_offset_ms >= 0.0,
          "latency_offset_ms must be >= 0");
  require(std::isfinite(c.intra_city_floor_ms) && c.intra_city_floor_ms >= 0.0,
          "intra_city_floor_ms must be >= 0");
}

std::string padded(const char* prefix, std::size_t i, std::size_t count) {
  int width = 3;
  for (std::size_t n = count; n >= 1000; n /= 10) ++width;
  std::string digits = std::to_string(i);
  if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

}  // namespace

GeneratorConfig parse_generator_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("generator config: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::kConfig, "generator config must be a JSON object");

  static const std::set<std::string> known{
      "zones", "hours", "start", "intensity_min", "intensity_max", "diurnal_amplitude", "jitter",
      "dcs", "bbox", "ms_per_km", "latency_offset_ms", "intra_city_floor_ms"};
  GeneratorConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (!known.contains(key)) fail(ErrorKind::kConfig, "generator config: unknown field '" + key + "'");
    }
    auto count = [&](const char* key, std::size_t& out) {
      if (!doc.contains(key)) return;
      const auto v = doc[key].get<std::int64_t>();
      if (v < 0) fail(ErrorKind::kConfig, std::string("generator config: ") + key + " must be >= 0");
      out = static_cast<std::size_t>(v);
    };
    auto real = [&](const json& obj, const char* key, double& out) {
      if (obj.contains(key)) out = obj[key].get<double>();
    };
    count("zones", c.zones);
    count("hours", c.hours);
    count("dcs", c.dcs);
    if (doc.contains("start")) c.start = parse_utc(doc["start"].get<std::string>());
    real(doc, "intensity_min", c.intensity_min);
    real(doc, "intensity_max", c.intensity_max);
    real(doc, "diurnal_amplitude", c.diurnal_amplitude);
    real(doc, "jitter", c.jitter);
    real(doc, "ms_per_km", c.ms_per_km);
    real(doc, "latency_offset_ms", c.latency_offset_ms);
    real(doc, "intra_city_floor_ms", c.intra_city_floor_ms);
    if (doc.contains("bbox")) {
      const json& b = doc["bbox"];
      real(b, "lat_min", c.bbox.lat_min);
      real(b, "lat_max", c.bbox.lat_max);
      real(b, "lon_min", c.bbox.lon_min);
      real(b, "lon_max", c.bbox.lon_max);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("generator config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    fail(ErrorKind::kConfig, std::string("generator config: ") + e.what());
  }
  check_config(c);
  return c;
}

std::string generator_config_to_json(const GeneratorConfig& c) {
  json doc = {{"zones", c.zones},
              {"hours", c.hours},
              {"start", format_utc(c.start)},
              {"intensity_min", c.intensity_min},
              {"intensity_max", c.intensity_max},
              {"diurnal_amplitude", c.diurnal_amplitude},
              {"jitter", c.jitter},
              {"dcs", c.dcs},
              {"bbox",
               {{"lat_min", c.bbox.lat_min},
                {"lat_max", c.bbox.lat_max},
                {"lon_min", c.bbox.lon_min},
                {"lon_max", c.bbox.lon_max}}},
              {"ms_per_km", c.ms_per_km},
              {"latency_offset_ms", c.latency_offset_ms},
              {"intra_city_floor_ms", c.intra_city_floor_ms}};
  return doc.dump(2) + "\n";
}

SyntheticWorld generate_synthetic_traces(const GeneratorConfig& config, std::uint64_t seed) {
  check_config(config);
  Rng rng(seed);

  struct ZoneSpec {
    GeoPoint centre;
    double base;
    double phase;
  };
  std::vector<ZoneSpec> zones;
  zones.reserve(config.zones);
  for (std::size_t z = 0; z < config.zones; ++z) {
    const double lat = rng.uniform(config.bbox.lat_min, config.bbox.lat_max);
    const double lon = rng.uniform(config.bbox.lon_min, config.bbox.lon_max);
    const double base = rng.uniform(config.intensity_min, config.intensity_max);
    const double phase = rng.uniform(0.0, 24.0);
    zones.push_back({GeoPoint(lat, lon), base, phase});
  }

  std::vector<NamedPoint> cities;
  DataCenterRegistry dcs;
  for (std::size_t d = 0; d < config.dcs; ++d) {
    const GeoPoint p(rng.uniform(config.bbox.lat_min, config.bbox.lat_max),
                     rng.uniform(config.bbox.lon_min, config.bbox.lon_max));
    std::size_t zone = 0;
    double best = haversine_km(p, zones[0].centre);
    for (std::size_t z = 1; z < zones.size(); ++z) {
      const double km = haversine_km(p, zones[z].centre);
      if (km < best) {
        best = km;
        zone = z;
      }
    }
    std::string city = padded("city-", d, config.dcs);
    cities.emplace_back(city, p);
    dcs.add({padded("dc-", d, config.dcs), p, std::move(city), padded("Z", zone, config.zones)});
  }

  CarbonRegistry carbon;
  const auto start_hour = config.start.time_since_epoch().count() / 3600;
  for (std::size_t z = 0; z < zones.size(); ++z) {
    std::vector<double> values(config.hours);
    const double amp = config.diurnal_amplitude;
    for (std::size_t h = 0; h < config.hours; ++h) {
      const double hour_of_day = static_cast<double>((start_hour + static_cast<std::int64_t>(h)) % 24);
      const double wave = std::sin(2.0 * std::numbers::pi * (hour_of_day + zones[z].phase) / 24.0);
      const double noise = rng.uniform(-1.0, 1.0);
      const double v = zones[z].base + amp * wave + amp * config.jitter * noise;
      values[h] = v > 0.0 ? v : 0.0;
    }
    std::string id = padded("Z", z, config.zones);
    carbon.add({id, "Synthetic zone " + id}, CarbonIntensityTrace(id, config.start, std::move(values)));
  }

  std::vector<std::string> names;
  names.reserve(cities.size());
  for (const auto& c : cities) names.push_back(c.first);
  LatencyMatrix latency(names, config.intra_city_floor_ms);
  fill_missing_latency(latency, cities, {config.ms_per_km, config.latency_offset_ms});

  return SyntheticWorld{std::move(carbon), std::move(latency), std::move(cities), std::move(dcs)};
}

}  // namespace carbonedge
