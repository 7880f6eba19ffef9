#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge {

using nlohmann::json;

void DataCenterRegistry::add(DataCenterRecord record) {
  if (record.dc_id.empty()) fail(ErrorKind::kValidation, "data center with empty id");
  if (index_.contains(record.dc_id)) {
    fail(ErrorKind::kValidation, "duplicate data center id " + record.dc_id);
  }
  index_.emplace(record.dc_id, records_.size());
  records_.push_back(std::move(record));
}

const DataCenterRecord* DataCenterRegistry::find(std::string_view dc_id) const {
  auto it = index_.find(std::string(dc_id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const DataCenterRecord& DataCenterRegistry::at(std::string_view dc_id) const {
  const auto* rec = find(dc_id);
  if (rec == nullptr) fail(ErrorKind::kData, "unknown data center " + std::string(dc_id));
  return *rec;
}

namespace {

GeoPoint parse_point(const std::vector<std::string>& fields, std::size_t lat_col, std::size_t lon_col,
                     const std::string& where) {
  const auto lat = csv::parse_number(fields[lat_col]);
  const auto lon = csv::parse_number(fields[lon_col]);
  if (!lat || !lon) fail(ErrorKind::kParse, where + ": invalid coordinates");
  try {
    return GeoPoint(*lat, *lon);
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, where + ": " + e.what());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<NamedPoint> load_cities(const std::filesystem::path& path) {
  csv::Reader reader(path);
  const auto ci = reader.column("city_id");
  const auto la = reader.column("lat");
  const auto lo = reader.column("lon");
  if (!ci || !la || !lo) fail(ErrorKind::kSchema, path.string() + ": expected header city_id,lat,lon");
  const std::size_t width = std::max({*ci, *la, *lo}) + 1;
  std::vector<NamedPoint> cities;
  std::set<std::string> seen;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::string where = path.filename().string() + " line " + std::to_string(reader.line_number());
    if (fields.size() < width) fail(ErrorKind::kParse, where + ": too few fields");
    if (fields[*ci].empty()) fail(ErrorKind::kParse, where + ": empty city id");
    if (!seen.insert(fields[*ci]).second) {
      fail(ErrorKind::kValidation, where + ": duplicate city id " + fields[*ci]);
    }
    cities.emplace_back(fields[*ci], parse_point(fields, *la, *lo, where));
  }
  return cities;
}

void write_cities(const std::filesystem::path& path, std::span<const NamedPoint> cities) {
  auto out = open_out(path);
  out << "city_id,lat,lon\n";
  for (const auto& [id, p] : cities) {
    out << csv::quote_if_needed(id) << ',' << csv::format_number(p.latitude_deg()) << ','
        << csv::format_number(p.longitude_deg()) << '\n';
  }
}

DataCenterRegistry load_datacenters(const std::filesystem::path& path,
                                    std::span<const NamedPoint> cities) {
  csv::Reader reader(path);
  const auto di = reader.column("dc_id");
  const auto la = reader.column("lat");
  const auto lo = reader.column("lon");
  const auto zi = reader.column("zone_id");
  if (!di || !la || !lo || !zi) {
    fail(ErrorKind::kSchema, path.string() + ": expected header dc_id,lat,lon,zone_id");
  }
  const std::size_t width = std::max({*di, *la, *lo, *zi}) + 1;
  DataCenterRegistry registry;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::string where = path.filename().string() + " line " + std::to_string(reader.line_number());
    if (fields.size() < width) fail(ErrorKind::kParse, where + ": too few fields");
    if (fields[*zi].empty()) fail(ErrorKind::kParse, where + ": empty zone id");
    GeoPoint location = parse_point(fields, *la, *lo, where);
    std::string city = map_dc_to_city(location, cities);
    registry.add({fields[*di], location, std::move(city), fields[*zi]});
  }
  return registry;
}

void write_datacenters(const std::filesystem::path& path, const DataCenterRegistry& dcs) {
  auto out = open_out(path);
  out << "dc_id,lat,lon,zone_id\n";
  for (const auto& rec : dcs.records()) {
    out << csv::quote_if_needed(rec.dc_id) << ',' << csv::format_number(rec.location.latitude_deg())
        << ',' << csv::format_number(rec.location.longitude_deg()) << ','
        << csv::quote_if_needed(rec.zone_id) << '\n';
  }
}

ProfileRegistry parse_profiles(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kParse, std::string("workload profile JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::kSchema, "workload profile JSON must be an object");

  auto quantity = [](const json& v, const std::string& where) {
    if (!v.is_number()) fail(ErrorKind::kSchema, where + " must be a number");
    const double q = v.get<double>();
    if (!std::isfinite(q) || q < 0.0) fail(ErrorKind::kValidation, where + " must be >= 0");
    return q;
  };

  ProfileRegistry profiles;
  for (const auto& [app_class, devices] : doc.items()) {
    if (!devices.is_object() || devices.empty()) {
      fail(ErrorKind::kSchema, "profile " + app_class + " needs at least one device class");
    }
    WorkloadProfile profile{app_class, {}};
    for (const auto& [device, row] : devices.items()) {
      const std::string where = app_class + "/" + device;
      for (const char* key : {"demands", "energy_kwh_per_hour", "service_time_ms"}) {
        if (!row.is_object() || !row.contains(key)) {
          fail(ErrorKind::kValidation, "profile " + where + " is missing '" + key + "'");
        }
      }
      ProfileRow parsed;
      if (!row["demands"].is_object()) fail(ErrorKind::kSchema, where + ".demands must be an object");
      for (const auto& [dim, qty] : row["demands"].items()) {
        parsed.demands[dim] = quantity(qty, where + ".demands." + dim);
      }
      parsed.energy_kwh_per_hour = quantity(row["energy_kwh_per_hour"], where + ".energy_kwh_per_hour");
      parsed.service_time_ms = quantity(row["service_time_ms"], where + ".service_time_ms");
      profile.by_device.emplace(device, std::move(parsed));
    }
    profiles.emplace(app_class, std::move(profile));
  }
  return profiles;
}

ProfileRegistry load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kParse, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_profiles(buf.str());
}

std::string profiles_to_json(const ProfileRegistry& profiles) {
  json doc = json::object();
  for (const auto& [app_class, profile] : profiles) {
    for (const auto& [device, row] : profile.by_device) {
      json demands = json::object();
      for (const auto& [dim, q] : row.demands) demands[dim] = q;
      doc[app_class][device] = {{"demands", demands},
                                {"energy_kwh_per_hour", row.energy_kwh_per_hour},
                                {"service_time_ms", row.service_time_ms}};
    }
  }
  return doc.dump(2) + "\n";
}

std::vector<std::string> cross_reference_issues(const DataCenterRegistry& dcs,
                                                const LatencyMatrix& latency,
                                                const CarbonRegistry& carbon) {
  std::vector<std::string> issues;
  std::set<std::string> cities;
  for (const auto& rec : dcs.records()) {
    if (carbon.find(rec.zone_id) == nullptr) {
      issues.push_back("data center " + rec.dc_id + ": zone " + rec.zone_id + " has no carbon trace");
    }
    if (!latency.contains(rec.city_id)) {
      issues.push_back("data center " + rec.dc_id + ": city " + rec.city_id +
                       " is not in the latency matrix");
    } else {
      cities.insert(rec.city_id);
    }
  }
  const std::vector<std::string> city_list(cities.begin(), cities.end());
  for (std::size_t i = 0; i < city_list.size(); ++i) {
    for (std::size_t j = i + 1; j < city_list.size(); ++j) {
      if (!latency.find_rtt(city_list[i], city_list[j])) {
        issues.push_back("missing latency pair " + city_list[i] + " - " + city_list[j]);
      }
    }
  }
  return issues;
}

}  // namespace carbonedge
