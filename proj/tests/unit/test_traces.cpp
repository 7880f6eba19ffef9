#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "carbonedge/csv.hpp"
#include "carbonedge/error.hpp"
#include "carbonedge/geo.hpp"
#include "carbonedge/rng.hpp"
#include "carbonedge/traces.hpp"

using namespace carbonedge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "carbonedge_unit";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

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

TEST_CASE("timestamps parse in both accepted spellings and format back") {
  const TimePoint a = parse_utc("2023-03-01T05:00:00Z");
  CHECK(parse_utc("2023-03-01 05:00:00") == a);
  CHECK(parse_utc("2023-03-01T05:00:00+00:00") == a);
  CHECK(format_utc(a) == "2023-03-01T05:00:00Z");
  CHECK(kind_of([] { parse_utc("2023-03-01"); }) == ErrorKind::kParse);
  CHECK(month_start(2023, 3) == parse_utc("2023-03-01T00:00:00Z"));
  CHECK(year_of(a) == 2023);
}

TEST_CASE("csv numbers round-trip and quoted fields split") {
  for (double v : {0.0, 0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5}) CHECK(*csv::parse_number(csv::format_number(v)) == v);
  CHECK(!csv::parse_number("1.5x"));
  const auto f = csv::split_row(R"(a,"b,c", d ,"e""f")");
  REQUIRE(f.size() == 4);
  CHECK(f[1] == "b,c");
  CHECK(f[2] == "d");
  CHECK(f[3] == "e\"f");
}

TEST_CASE("great-circle distances") {
  const GeoPoint a(0, 0), b(0, 1);
  CHECK(haversine_km(a, b) == doctest::Approx(kEarthRadiusKm * M_PI / 180.0).epsilon(1e-12));
  CHECK(haversine_km(GeoPoint(90, 0), GeoPoint(-90, 0)) == doctest::Approx(kEarthRadiusKm * M_PI));
  CHECK(kind_of([] { GeoPoint(91, 0); }) == ErrorKind::kValidation);
  CHECK(kind_of([] { GeoPoint(0, 180.5); }) == ErrorKind::kValidation);
}

TEST_CASE("chord threshold and haversine order points identically") {
  Rng rng(5);
  for (int k = 0; k < 500; ++k) {
    const GeoPoint p(rng.uniform(-80, 80), rng.uniform(-180, 180));
    const GeoPoint q(rng.uniform(-80, 80), rng.uniform(-180, 180));
    const double km = haversine_km(p, q);
    const auto u = to_unit_vector(p), v = to_unit_vector(q);
    const double chord = (u.x - v.x) * (u.x - v.x) + (u.y - v.y) * (u.y - v.y) + (u.z - v.z) * (u.z - v.z);
    CHECK(chord == doctest::Approx(chord_sq_for_distance(km)).epsilon(1e-9));
  }
}

TEST_CASE("nearest city mapping breaks ties by id") {
  std::vector<NamedPoint> cities{{"b", GeoPoint(0, 1)}, {"a", GeoPoint(0, -1)}, {"c", GeoPoint(10, 10)}};
  CHECK(map_dc_to_city(GeoPoint(0, 0), cities) == "a");
  CHECK(map_dc_to_city(GeoPoint(9, 9), cities) == "c");
  CHECK(kind_of([] { map_dc_to_city(GeoPoint(0, 0), {}); }) == ErrorKind::kConfig);
}

TEST_CASE("native traces load, average and report coverage") {
  const auto p = write_file("trace_ok.csv",
                            "zone_id,timestamp_utc,carbon_intensity_gco2_kwh\n"
                            "Z1,2023-01-01T01:00:00Z,300\n"
                            "Z1,2023-01-01T00:00:00Z,100\n"
                            "Z1,2023-01-01T02:00:00Z,200\n"
                            "Z2,2023-01-01T00:00:00Z,50\n");
  const auto r = load_carbon_traces(p);
  REQUIRE(r.registry.size() == 2);
  const auto& t = r.registry.at("Z1");
  CHECK(t.size() == 3);
  CHECK(t.at(parse_utc("2023-01-01T01:30:00Z")) == 300);
  CHECK(t.mean(t.start(), 2) == 200);
  CHECK(t.mean(parse_utc("2023-01-01T02:00:00Z"), 24) == 200);
  CHECK(t.overall_mean() == 200);
  CHECK(t.covers(t.start(), t.end()));
  CHECK(!t.covers(t.start(), t.end() + Hours{1}));
  CHECK(kind_of([&] { t.at(t.end()); }) == ErrorKind::kData);
}

TEST_CASE("a gap is rejected with zone and hour, or filled when allowed") {
  const auto p = write_file("trace_gap.csv",
                            "zone_id,timestamp_utc,carbon_intensity_gco2_kwh\n"
                            "Z1,2023-01-01T00:00:00Z,100\n"
                            "Z1,2023-01-01T03:00:00Z,400\n");
  try {
    load_carbon_traces(p);
    FAIL("gap accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    const std::string msg = e.what();
    CHECK(msg.find("Z1") != std::string::npos);
    CHECK(msg.find("2023-01-01T01:00:00Z") != std::string::npos);
  }
  TraceLoadOptions opts;
  opts.interpolate_gaps = true;
  const auto r = load_carbon_traces(p, TraceSchema::kNative, opts);
  CHECK(r.filled_hours == 2);
  const auto v = r.registry.at("Z1").values();
  REQUIRE(v.size() == 4);
  CHECK(v[1] == 200);
  CHECK(v[2] == 300);
}

TEST_CASE("malformed rows fail fast or are collected") {
  const auto p = write_file("trace_bad.csv",
                            "zone_id,timestamp_utc,carbon_intensity_gco2_kwh\n"
                            "Z1,2023-01-01T00:00:00Z,100\n"
                            "Z1,yesterday,5\n"
                            "Z1,2023-01-01T01:00:00Z,110\n");
  CHECK(kind_of([&] { load_carbon_traces(p); }) == ErrorKind::kParse);
  TraceLoadOptions opts;
  opts.skip_malformed_rows = true;
  const auto r = load_carbon_traces(p, TraceSchema::kNative, opts);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].line == 3);
  CHECK(r.registry.at("Z1").size() == 2);
}

TEST_CASE("negative intensity and unknown schema are rejected") {
  const auto p = write_file("trace_neg.csv",
                            "zone_id,timestamp_utc,carbon_intensity_gco2_kwh\nZ1,2023-01-01T00:00:00Z,-1\n");
  CHECK(kind_of([&] { load_carbon_traces(p); }) != ErrorKind::kConfig);
  CHECK(kind_of([] { parse_trace_schema("csv"); }) == ErrorKind::kSchema);
  const auto q = write_file("trace_cols.csv", "zone,time,value\nZ1,2023-01-01T00:00:00Z,1\n");
  CHECK(kind_of([&] { load_carbon_traces(q); }) == ErrorKind::kSchema);
}

TEST_CASE("electricity maps exports load") {
  const auto p = write_file("trace_em.csv",
                            "Datetime (UTC),Country,Zone Name,Zone Id,Carbon Intensity gCO₂eq/kWh (direct),"
                            "Carbon Intensity gCO₂eq/kWh (LCA)\n"
                            "2023-01-01 00:00:00,US,Florida,US-FLA-FPL,300,350\n"
                            "2023-01-01 01:00:00,US,Florida,US-FLA-FPL,310,360\n");
  const auto r = load_carbon_traces(p, TraceSchema::kElectricityMaps);
  const auto& t = r.registry.at("US-FLA-FPL");
  CHECK(t.values()[0] == 350);
  CHECK(t.values()[1] == 360);
  CHECK(r.registry.zone("US-FLA-FPL").display_name == "Florida");
}

TEST_CASE("traces round-trip through the native writer") {
  CarbonRegistry reg;
  reg.add({"Z1", "one"}, CarbonIntensityTrace("Z1", parse_utc("2023-05-01T00:00:00Z"), {1.25, 2.5, 0.1}));
  const auto p = scratch("trace_rt.csv");
  write_carbon_traces(p, reg);
  const auto back = load_carbon_traces(p).registry;
  CHECK(back.at("Z1").values()[2] == 0.1);
  CHECK(back.at("Z1").start() == parse_utc("2023-05-01T00:00:00Z"));
}

TEST_CASE("latency matrix is symmetric with an intra-city floor") {
  LatencyMatrix m({"jacksonville", "miami", "graz"}, 0.5);
  m.set_rtt("jacksonville", "miami", 7.28);
  CHECK(m.rtt("miami", "jacksonville") == 7.28);
  CHECK(m.one_way("jacksonville", "miami") == doctest::Approx(3.64));
  CHECK(m.rtt("graz", "graz") == 0.5);
  CHECK(!m.find_rtt("graz", "miami"));
  CHECK(m.missing_pairs() == 2);
  CHECK(kind_of([&] { m.rtt("graz", "miami"); }) == ErrorKind::kData);
  CHECK(kind_of([&] { m.set_rtt("graz", "miami", -1); }) == ErrorKind::kValidation);
  CHECK(kind_of([&] { m.set_rtt("graz", "lyon", 1); }) == ErrorKind::kData);
}

TEST_CASE("asymmetric latency rows average or fail") {
  const auto p = write_file("lat.csv", "city_a,city_b,rtt_ms\ngraz,lyon,32\nlyon,graz,32.88\n");
  CHECK(load_latency_matrix(p).rtt("graz", "lyon") == doctest::Approx(32.44));
  LatencyLoadOptions strict;
  strict.asymmetry = AsymmetryPolicy::kReject;
  CHECK(kind_of([&] { load_latency_matrix(p, strict); }) == ErrorKind::kValidation);
}

TEST_CASE("missing latencies are filled from distance only on request") {
  std::vector<NamedPoint> cities{{"a", GeoPoint(40, -80)}, {"b", GeoPoint(41, -80)}};
  LatencyMatrix m({"a", "b"});
  CHECK(fill_missing_latency(m, cities, {0.02, 1.0}) == 1);
  CHECK(m.rtt("a", "b") == doctest::Approx(haversine_km(cities[0].second, cities[1].second) * 0.02 + 1.0));
  CHECK(fill_missing_latency(m, cities, {0.02, 1.0}) == 0);
}

TEST_CASE("data centers map to cities and cross-reference issues are listed") {
  const auto cities_p = write_file("cities.csv", "city_id,lat,lon\nca,40,-80\ncb,45,-70\n");
  const auto dcs_p = write_file("dcs.csv", "dc_id,lat,lon,zone_id\nd1,40.1,-80.1,Z1\nd2,44.9,-70.2,Z9\n");
  const auto cities = load_cities(cities_p);
  const auto dcs = load_datacenters(dcs_p, cities);
  CHECK(dcs.at("d1").city_id == "ca");
  CHECK(dcs.at("d2").city_id == "cb");
  LatencyMatrix m({"ca"});
  CarbonRegistry carbon;
  carbon.add({"Z1", "z"}, CarbonIntensityTrace("Z1", parse_utc("2023-01-01T00:00:00Z"), {1.0}));
  const auto issues = cross_reference_issues(dcs, m, carbon);
  CHECK(issues.size() >= 2);
  const auto dup = write_file("dcs_dup.csv", "dc_id,lat,lon,zone_id\nd1,40,-80,Z1\nd1,41,-80,Z1\n");
  CHECK(kind_of([&] { load_datacenters(dup, cities); }) == ErrorKind::kValidation);
}

TEST_CASE("workload profiles parse and round-trip") {
  const std::string text =
      R"({"resnet50": {"a2": {"demands": {"memory_mb": 1800}, "energy_kwh_per_hour": 0.018, "service_time_ms": 14}}})";
  const auto p = parse_profiles(text);
  CHECK(p.at("resnet50").by_device.at("a2").energy_kwh_per_hour == 0.018);
  CHECK(parse_profiles(profiles_to_json(p)).at("resnet50").by_device.at("a2").demands.at("memory_mb") == 1800);
  CHECK(kind_of([] { parse_profiles("{"); }) == ErrorKind::kParse);
  CHECK(kind_of([] { parse_profiles(R"({"x": {}})"); }) == ErrorKind::kSchema);
  CHECK(kind_of([] {
          parse_profiles(R"({"x": {"cpu": {"demands": {}, "energy_kwh_per_hour": -1, "service_time_ms": 1}}})");
        }) == ErrorKind::kValidation);
}

TEST_CASE("synthetic generator is a pure function of config and seed") {
  GeneratorConfig g;
  g.hours = 72;
  g.dcs = 12;
  const auto a = generate_synthetic_traces(g, 3);
  const auto b = generate_synthetic_traces(g, 3);
  const auto c = generate_synthetic_traces(g, 4);
  REQUIRE(a.carbon.size() == g.zones);
  bool differs = false;
  for (const auto& [zone, trace] : a.carbon) {
    CHECK(trace.size() == 72);
    const auto other = b.carbon.at(zone).values();
    for (std::size_t h = 0; h < trace.size(); ++h) {
      CHECK(trace.values()[h] == other[h]);
      CHECK(trace.values()[h] >= 0.0);
    }
    differs = differs || c.carbon.at(zone).values()[0] != trace.values()[0];
  }
  CHECK(differs);
  CHECK(a.dcs.size() == 12);
  CHECK(cross_reference_issues(a.dcs, a.latency, a.carbon).empty());
  CHECK(a.latency.missing_pairs() == 0);
  CHECK(parse_generator_config(generator_config_to_json(g)).dcs == g.dcs);
  CHECK(kind_of([] { parse_generator_config(R"({"dcs": -2})"); }) == ErrorKind::kConfig);
}
