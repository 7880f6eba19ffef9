#include "carbonedge/fixtures.hpp"

#include <fstream>

#include "carbonedge/error.hpp"

namespace carbonedge {

ProfileRegistry synthetic_profiles() {
  struct Row {
    const char* app;
    const char* device;
    double memory_mb;
    double slots;
    double kwh_per_h;
    double service_ms;
  };
  static const Row rows[] = {
      {"efficientnet_b0", "jetson_nano", 900, 1, 0.004, 38},
      {"efficientnet_b0", "a2", 1100, 1, 0.012, 9},
      {"efficientnet_b0", "gtx1080", 1200, 1, 0.035, 5},
      {"resnet50", "jetson_nano", 1400, 1, 0.006, 61},
      {"resnet50", "a2", 1800, 1, 0.018, 14},
      {"resnet50", "gtx1080", 1900, 1, 0.052, 7},
      {"yolov4", "jetson_nano", 2600, 2, 0.009, 142},
      {"yolov4", "a2", 3100, 1, 0.027, 31},
      {"yolov4", "gtx1080", 3300, 1, 0.078, 16},
      {"sensor_fusion", "a2", 600, 1, 0.010, 4},
      {"sensor_fusion", "gtx1080", 600, 1, 0.020, 4},
  };
  ProfileRegistry out;
  for (const auto& r : rows) {
    auto& profile = out[r.app];
    profile.app_class = r.app;
    profile.by_device[r.device] =
        ProfileRow{{{"memory_mb", r.memory_mb}, {"slots", r.slots}}, r.kwh_per_h, r.service_ms};
  }
  return out;
}

ScenarioConfig default_scenario(const GeneratorConfig& generator, std::uint64_t seed) {
  ScenarioConfig c;
  c.start = generator.start;
  c.end = generator.start + Hours{static_cast<long>(std::min<std::size_t>(48, generator.hours))};
  c.seed = seed;
  c.batch_interval_minutes = 5.0;
  c.latency_limit_ms = 20.0;
  c.forecast_horizon_hours = 24;
  c.arrivals.kind = ArrivalKind::kUniform;
  c.arrivals.rate_per_hour = 1.0;
  c.capacity.kind = CapacityKind::kHomogeneous;
  c.capacity.servers_per_dc = 3;
  c.device_classes["jetson_nano"] = {{{"memory_mb", 8000}, {"slots", 4}}, 0.006};
  c.device_classes["a2"] = {{{"memory_mb", 16000}, {"slots", 8}}, 0.025};
  c.device_classes["gtx1080"] = {{{"memory_mb", 8000}, {"slots", 8}}, 0.06};
  c.device_mix = {"a2", "jetson_nano", "gtx1080"};
  c.initially_on = 0.0;
  c.workload_mix = {{"efficientnet_b0", 1.0, {}},
                    {"resnet50", 2.0, {}},
                    {"yolov4", 1.0, {}},
                    {"sensor_fusion", 1.0, {}}};
  c.lifetime = {LifetimeKind::kExponential, 6.0};
  c.policy.kind = PolicyKind::kCarbonEdge;
  c.policy.solver.time_limit_s = 2.0;
  c.data.carbon = "carbon.csv";
  c.data.latency = "latency.csv";
  c.data.cities = "cities.csv";
  c.data.datacenters = "datacenters.csv";
  c.data.profiles = "profiles.json";
  return c;
}

std::vector<std::filesystem::path> write_fixtures(const std::filesystem::path& dir, const GeneratorConfig& generator,
                                                  std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kData, "cannot create " + dir.string() + ": " + ec.message());
  const SyntheticWorld world = generate_synthetic_traces(generator, seed);
  const ScenarioConfig scenario = default_scenario(generator, seed);
  std::vector<std::filesystem::path> paths;
  auto add = [&](const std::filesystem::path& p) {
    paths.push_back(dir / p);
    return paths.back();
  };
  write_carbon_traces(add(scenario.data.carbon), world.carbon);
  write_latency_matrix(add(scenario.data.latency), world.latency);
  write_cities(add(scenario.data.cities), world.cities);
  write_datacenters(add(scenario.data.datacenters), world.dcs);
  auto text_out = [&](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(add(p), std::ios::binary);
    if (!out) fail(ErrorKind::kData, "cannot write " + paths.back().string());
    out << text << '\n';
  };
  text_out(scenario.data.profiles, profiles_to_json(synthetic_profiles()));
  text_out("scenario.json", to_json(scenario).dump(2));
  return paths;
}

}  // namespace carbonedge
