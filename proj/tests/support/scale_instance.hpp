#pragma once

// The large single-batch instance: 140 apps over 400 servers in 40 data
// centers of a synthetic geography, three device classes.

#include <memory>
#include <string>
#include <vector>

#include "carbonedge/model.hpp"
#include "carbonedge/rng.hpp"
#include "carbonedge/traces.hpp"

namespace carbonedge::testing {

struct ScaleInstance {
  SyntheticWorld world;
  IntensityForecasts forecasts;
  std::vector<ServerState> servers;
  std::vector<ApplicationRequest> apps;
  std::unique_ptr<Topology> topo;
};

inline std::unique_ptr<ScaleInstance> make_scale_instance(std::uint64_t seed, std::size_t n_apps = 140,
                                                          std::size_t n_dcs = 40, std::size_t per_dc = 10) {
  GeneratorConfig g;
  g.zones = 8;
  g.hours = 48;
  g.dcs = n_dcs;
  g.bbox = {36.0, 44.0, -90.0, -76.0};
  g.ms_per_km = 0.02;
  g.latency_offset_ms = 1.0;
  auto inst = std::make_unique<ScaleInstance>(ScaleInstance{generate_synthetic_traces(g, seed), {}, {}, {}, {}});
  inst->forecasts = IntensityForecasts::build(inst->world.carbon, g.start, 24);
  inst->topo = std::make_unique<Topology>(inst->world.latency, inst->world.dcs);

  Rng rng(seed ^ 0x5ca1eull);
  const char* devices[] = {"gpu-a2", "gpu-t4", "cpu-xeon"};
  const double base[] = {0.06, 0.09, 0.12};
  for (const auto& dc : inst->world.dcs.records()) {
    for (std::size_t k = 0; k < per_dc; ++k) {
      ServerState s;
      s.server_id = dc.dc_id + "/s" + std::to_string(k);
      s.dc_id = dc.dc_id;
      s.device_class = devices[k % 3];
      s.capacities = {{"memory_mb", 16000.0}, {"slots", 8.0}};
      s.base_power_kwh_per_h = base[k % 3];
      s.powered_on = rng.uniform() < 0.5;
      inst->servers.push_back(std::move(s));
    }
  }
  const auto& records = inst->world.dcs.records();
  for (std::size_t i = 0; i < n_apps; ++i) {
    ApplicationRequest a;
    a.app_id = "app-" + std::to_string(i);
    a.origin_dc = records[rng.index(records.size())].dc_id;
    a.latency_limit_ms = 20.0;
    const double scale = 0.5 + rng.uniform();
    a.device_rows["gpu-a2"] = ProfileRow{{{"memory_mb", 2000.0 * scale}, {"slots", 1.0}}, 0.030 * scale, 20.0};
    a.device_rows["gpu-t4"] = ProfileRow{{{"memory_mb", 2500.0 * scale}, {"slots", 1.0}}, 0.040 * scale, 15.0};
    a.device_rows["cpu-xeon"] = ProfileRow{{{"memory_mb", 3000.0 * scale}, {"slots", 2.0}}, 0.070 * scale, 60.0};
    inst->apps.push_back(std::move(a));
  }
  return inst;
}

}  // namespace carbonedge::testing
