#include "ctmpc/benchmark.hpp"

#include <algorithm>

namespace ctmpc {
namespace benchmark {

namespace {

constexpr double kGreenFraction = 0.6;

PhaseEntry green(const NetworkSpec& spec, int lane) {
  PhaseEntry ph;
  ph.green = true;
  ph.outflow_fraction = kGreenFraction;
  const auto& out = spec.out_edges[lane];
  if (!out.empty()) {
    double q = 1.0 / static_cast<double>(out.size());
    for (int to : out) ph.splits.emplace_back(to, q);
  }
  return ph;
}

void add_intersection(NetworkSpec& spec, int id, std::vector<int> lane_ids,
                      std::vector<std::pair<std::string, int>> configs) {
  Intersection m;
  m.id = id;
  for (int lid : lane_ids) m.lanes.push_back(spec.lane_of(lid));
  for (const auto& [label, green_lane] : configs) {
    LocalConfig c;
    c.label = label;
    c.phase.assign(m.lanes.size(), PhaseEntry{});
    int lane = spec.lane_of(green_lane);
    auto pos = std::find(m.lanes.begin(), m.lanes.end(), lane) - m.lanes.begin();
    c.phase[pos] = green(spec, lane);
    m.configs.push_back(std::move(c));
  }
  int index = static_cast<int>(spec.intersections.size());
  for (size_t s = 0; s < m.lanes.size(); ++s) {
    spec.controlling[m.lanes[s]] = index;
    spec.lane_slot[m.lanes[s]] = static_cast<int>(s);
  }
  spec.intersections.push_back(std::move(m));
}

}  // namespace

NetworkSpec network() {
  NetworkSpec spec;
  for (int id = 1; id <= 14; ++id) {
    spec.lane_index[id] = static_cast<int>(spec.lane_ids.size());
    spec.lane_ids.push_back(id);
  }
  const int n = spec.n_lanes();

  const std::vector<std::pair<int, int>> edge_ids = {
      {2, 3},  {2, 11}, {7, 12},  {7, 14},  {7, 6},   {8, 1},  {8, 10},
      {8, 13}, {10, 3}, {10, 11}, {11, 4},  {11, 5},  {12, 1}, {12, 9},
      {12, 10}, {13, 6}, {13, 14}, {14, 4}, {14, 5}};
  spec.out_edges.assign(n, {});
  for (const auto& [a, b] : edge_ids) {
    int from = spec.lane_of(a);
    int to = spec.lane_of(b);
    spec.edges.emplace_back(from, to);
    spec.out_edges[from].push_back(to);
  }
  for (auto& adj : spec.out_edges) {
    std::sort(adj.begin(), adj.end(),
              [&](int x, int y) { return spec.id_of(x) < spec.id_of(y); });
  }

  for (int id : {2, 7, 8}) spec.inlets.push_back(spec.lane_of(id));

  spec.disturbance_min = IntVec::Constant(n, -2);
  spec.disturbance_max = IntVec::Constant(n, 2);

  spec.controlling.assign(n, -1);
  spec.lane_slot.assign(n, -1);
  add_intersection(spec, 1, {8, 12}, {{"green-8", 8}, {"green-12", 12}});
  add_intersection(spec, 2, {2, 10}, {{"green-10", 10}, {"green-2", 2}});
  add_intersection(spec, 3, {7, 13}, {{"green-7", 7}, {"green-13", 13}});
  add_intersection(spec, 4, {11, 14}, {{"green-14", 14}, {"green-11", 11}});

  spec.uncontrolled.assign(n, PhaseEntry{});
  for (int lane = 0; lane < n; ++lane) {
    if (spec.controlling[lane] < 0) spec.uncontrolled[lane] = green(spec, lane);
  }
  return spec;
}

Scenario normal_scenario() {
  Scenario sc;
  sc.name = "benchmark-normal";
  sc.network = network();
  const int n = sc.network.n_lanes();

  auto& cfg = sc.controller;
  cfg.horizon = 4;
  cfg.lane_weight = Vec::Ones(n);
  cfg.emergency_weight = 100.0;
  cfg.inflow_weight = 50.0 * Mat::Identity(3, 3);
  cfg.nominal_inflow = IntVec(3);
  cfg.nominal_inflow << 6, 6, 8;
  cfg.inflow_max = 16;
  cfg.cap_gate_normal = Vec::Constant(n, 20.0);
  cfg.cap_signal_normal = Vec::Constant(n, 20.0);
  cfg.cap_gate_extended = Vec::Constant(n, 25.0);
  cfg.cap_signal_extended = Vec::Constant(n, 25.0);

  sc.initial_state = IntVec(n);
  sc.initial_state << 15, 16, 15, 12, 12, 17, 18, 10, 10, 14, 12, 10, 16, 10;

  auto make_unit = [&](int id, std::vector<int> xs, std::vector<int> lanes,
                       std::vector<int> inlet_ids) {
    UnitSpec u;
    u.id = id;
    for (int x : xs) u.intersections.push_back(x - 1);
    for (int l : lanes) u.lanes.push_back(sc.network.lane_of(l));
    std::sort(u.lanes.begin(), u.lanes.end());
    for (int l : inlet_ids) {
      for (int s = 0; s < sc.network.n_inlets(); ++s) {
        if (sc.network.inlets[s] == sc.network.lane_of(l)) u.inlet_slots.push_back(s);
      }
    }
    std::sort(u.inlet_slots.begin(), u.inlet_slots.end());
    sc.units.push_back(std::move(u));
  };
  make_unit(1, {1}, {1, 8, 9, 12}, {8});
  make_unit(2, {2}, {2, 3, 10}, {2});
  make_unit(3, {3}, {6, 7, 13}, {7});
  make_unit(4, {4}, {4, 5, 11, 14}, {});

  sc.steps = 60;
  sc.seed = 90210;
  sc.baseline_dwell = 2;
  sc.ssd_window = 10;
  return sc;
}

Scenario emergency_scenario() {
  Scenario sc = normal_scenario();
  sc.name = "benchmark-emergency";
  EmergencyEvent ev;
  ev.time = 10;
  ev.entry = sc.network.lane_of(8);
  ev.exit = sc.network.lane_of(5);
  ev.arrival = 2;
  ev.traverse = 2;
  ev.recovery = 1;
  sc.events.push_back(ev);
  return sc;
}

}  // namespace benchmark
}  // namespace ctmpc
