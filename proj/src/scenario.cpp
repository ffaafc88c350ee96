#include "ctmpc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ctmpc {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ScenarioError(path + ": " + what);
}

const json& require(const json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) fail(path, "missing field '" + key + "'");
  return *it;
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

// Scalars broadcast to per-lane vectors; arrays must match the lane count.
Vec per_lane(const json& j, int n, const std::string& path) {
  if (j.is_number()) return Vec::Constant(n, j.get<double>());
  if (j.is_array()) {
    if (static_cast<int>(j.size()) != n) {
      fail(path, "expected " + std::to_string(n) + " entries");
    }
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = as_double(j[i], path + "[" + std::to_string(i) + "]");
    return v;
  }
  fail(path, "expected a number or an array");
}

IntVec per_lane_int(const json& j, int n, const std::string& path) {
  if (j.is_number_integer()) return IntVec::Constant(n, j.get<int>());
  if (j.is_array()) {
    if (static_cast<int>(j.size()) != n) {
      fail(path, "expected " + std::to_string(n) + " entries");
    }
    IntVec v(n);
    for (int i = 0; i < n; ++i) v[i] = as_int(j[i], path + "[" + std::to_string(i) + "]");
    return v;
  }
  fail(path, "expected an integer or an array");
}

int lane_ref(const NetworkSpec& spec, const json& j, const std::string& path) {
  int id = as_int(j, path);
  auto it = spec.lane_index.find(id);
  if (it == spec.lane_index.end()) fail(path, "unknown lane id " + std::to_string(id));
  return it->second;
}

int lane_ref_key(const NetworkSpec& spec, const std::string& key, const std::string& path) {
  int id = 0;
  try {
    size_t pos = 0;
    id = std::stoi(key, &pos);
    if (pos != key.size()) throw std::invalid_argument(key);
  } catch (const std::exception&) {
    fail(path, "lane key '" + key + "' is not an integer id");
  }
  auto it = spec.lane_index.find(id);
  if (it == spec.lane_index.end()) fail(path, "unknown lane id " + std::to_string(id));
  return it->second;
}

PhaseEntry parse_green_entry(const NetworkSpec& spec, int lane, const json& j,
                             const std::string& path) {
  PhaseEntry ph;
  ph.green = true;
  ph.outflow_fraction = as_double(require(j, "p", path), path + ".p");
  if (j.contains("splits")) {
    const json& sp = j["splits"];
    if (!sp.is_object()) fail(path + ".splits", "expected an object keyed by lane id");
    for (auto it = sp.begin(); it != sp.end(); ++it) {
      int to = lane_ref_key(spec, it.key(), path + ".splits");
      ph.splits.emplace_back(to, as_double(it.value(), path + ".splits." + it.key()));
    }
    std::sort(ph.splits.begin(), ph.splits.end(), [&](const auto& a, const auto& b) {
      return spec.id_of(a.first) < spec.id_of(b.first);
    });
  } else if (!spec.out_edges[lane].empty()) {
    double q = 1.0 / static_cast<double>(spec.out_edges[lane].size());
    for (int to : spec.out_edges[lane]) ph.splits.emplace_back(to, q);
  }
  return ph;
}

NetworkSpec parse_network(const json& j, const std::string& path) {
  NetworkSpec spec;
  const json& lanes = require(j, "lanes", path);
  if (!lanes.is_array() || lanes.empty()) fail(path + ".lanes", "expected a lane id array");
  for (size_t i = 0; i < lanes.size(); ++i) {
    int id = as_int(lanes[i], path + ".lanes[" + std::to_string(i) + "]");
    if (spec.lane_index.count(id)) {
      fail(path + ".lanes[" + std::to_string(i) + "]", "duplicate lane id");
    }
    spec.lane_index[id] = static_cast<int>(spec.lane_ids.size());
    spec.lane_ids.push_back(id);
  }
  const int n = spec.n_lanes();

  const json& edges = require(j, "edges", path);
  spec.out_edges.assign(n, {});
  for (size_t e = 0; e < edges.size(); ++e) {
    std::string ep = path + ".edges[" + std::to_string(e) + "]";
    if (!edges[e].is_array() || edges[e].size() != 2) fail(ep, "expected [from, to]");
    int from = lane_ref(spec, edges[e][0], ep + "[0]");
    int to = lane_ref(spec, edges[e][1], ep + "[1]");
    spec.edges.emplace_back(from, to);
    spec.out_edges[from].push_back(to);
  }
  for (auto& adj : spec.out_edges) {
    std::sort(adj.begin(), adj.end(),
              [&](int a, int b) { return spec.id_of(a) < spec.id_of(b); });
  }

  const json& inlets = require(j, "inlets", path);
  for (size_t i = 0; i < inlets.size(); ++i) {
    spec.inlets.push_back(lane_ref(spec, inlets[i], path + ".inlets[" + std::to_string(i) + "]"));
  }

  if (j.contains("opposite_pairs")) {
    const json& op = j["opposite_pairs"];
    for (size_t e = 0; e < op.size(); ++e) {
      std::string ep = path + ".opposite_pairs[" + std::to_string(e) + "]";
      if (!op[e].is_array() || op[e].size() != 2) fail(ep, "expected [a, b]");
      spec.opposite_pairs.emplace_back(lane_ref(spec, op[e][0], ep + "[0]"),
                                       lane_ref(spec, op[e][1], ep + "[1]"));
    }
  }

  const json& dist = require(j, "disturbance", path);
  spec.disturbance_min =
      per_lane_int(require(dist, "lower", path + ".disturbance"), n, path + ".disturbance.lower");
  spec.disturbance_max =
      per_lane_int(require(dist, "upper", path + ".disturbance"), n, path + ".disturbance.upper");

  spec.controlling.assign(n, -1);
  spec.lane_slot.assign(n, -1);
  const json& intersections = require(j, "intersections", path);
  for (size_t m = 0; m < intersections.size(); ++m) {
    std::string mp = path + ".intersections[" + std::to_string(m) + "]";
    const json& jm = intersections[m];
    Intersection intersection;
    intersection.id = as_int(require(jm, "id", mp), mp + ".id");
    const json& jlanes = require(jm, "lanes", mp);
    for (size_t s = 0; s < jlanes.size(); ++s) {
      int lane = lane_ref(spec, jlanes[s], mp + ".lanes[" + std::to_string(s) + "]");
      if (spec.controlling[lane] >= 0) {
        fail(mp + ".lanes[" + std::to_string(s) + "]", "lane already controlled elsewhere");
      }
      spec.controlling[lane] = static_cast<int>(m);
      spec.lane_slot[lane] = static_cast<int>(s);
      intersection.lanes.push_back(lane);
    }
    const json& configs = require(jm, "configs", mp);
    if (!configs.is_array() || configs.empty()) fail(mp + ".configs", "expected a nonempty array");
    for (size_t c = 0; c < configs.size(); ++c) {
      std::string cp = mp + ".configs[" + std::to_string(c) + "]";
      LocalConfig config;
      config.label = configs[c].contains("label")
                         ? configs[c]["label"].get<std::string>()
                         : "config-" + std::to_string(c);
      config.phase.assign(intersection.lanes.size(), PhaseEntry{});
      if (configs[c].contains("green")) {
        const json& greens = configs[c]["green"];
        if (!greens.is_object()) fail(cp + ".green", "expected an object keyed by lane id");
        for (auto it = greens.begin(); it != greens.end(); ++it) {
          int lane = lane_ref_key(spec, it.key(), cp + ".green");
          auto pos = std::find(intersection.lanes.begin(), intersection.lanes.end(), lane);
          if (pos == intersection.lanes.end()) {
            fail(cp + ".green." + it.key(), "lane not controlled by this intersection");
          }
          config.phase[pos - intersection.lanes.begin()] =
              parse_green_entry(spec, lane, it.value(), cp + ".green." + it.key());
        }
      }
      intersection.configs.push_back(std::move(config));
    }
    spec.intersections.push_back(std::move(intersection));
  }

  spec.uncontrolled.assign(n, PhaseEntry{});
  double default_p = 0.0;
  json per_lane_unc;
  if (j.contains("uncontrolled")) {
    const json& ju = j["uncontrolled"];
    default_p = as_double(require(ju, "outflow_fraction", path + ".uncontrolled"),
                          path + ".uncontrolled.outflow_fraction");
    if (ju.contains("per_lane")) per_lane_unc = ju["per_lane"];
  }
  for (int lane = 0; lane < n; ++lane) {
    if (spec.controlling[lane] >= 0) continue;
    json entry;
    entry["p"] = default_p;
    std::string key = std::to_string(spec.id_of(lane));
    if (per_lane_unc.is_object() && per_lane_unc.contains(key)) {
      entry = per_lane_unc[key];
    }
    spec.uncontrolled[lane] =
        parse_green_entry(spec, lane, entry, path + ".uncontrolled." + key);
  }
  return spec;
}

ControllerConfig parse_controller(const json& j, const NetworkSpec& spec,
                                  const std::string& path) {
  ControllerConfig cfg;
  const int n = spec.n_lanes();
  const int ni = spec.n_inlets();
  cfg.horizon = as_int(require(j, "horizon", path), path + ".horizon");
  if (cfg.horizon < 1) fail(path + ".horizon", "horizon must be at least 1");
  cfg.lane_weight = per_lane(require(j, "lane_weight", path), n, path + ".lane_weight");
  cfg.emergency_weight =
      as_double(require(j, "emergency_weight", path), path + ".emergency_weight");

  const json& theta = require(j, "inflow_weight", path);
  if (theta.is_number()) {
    cfg.inflow_weight = theta.get<double>() * Mat::Identity(ni, ni);
  } else if (theta.is_array()) {
    Vec d = per_lane(theta, ni, path + ".inflow_weight");
    cfg.inflow_weight = d.asDiagonal();
  } else {
    fail(path + ".inflow_weight", "expected a scalar or a diagonal array");
  }

  const json& nom = require(j, "nominal_inflow", path);
  if (!nom.is_array() || static_cast<int>(nom.size()) != ni) {
    fail(path + ".nominal_inflow", "expected " + std::to_string(ni) + " entries");
  }
  cfg.nominal_inflow = IntVec(ni);
  for (int i = 0; i < ni; ++i) {
    cfg.nominal_inflow[i] = as_int(nom[i], path + ".nominal_inflow[" + std::to_string(i) + "]");
  }

  cfg.inflow_max = j.contains("inflow_max")
                       ? as_int(j["inflow_max"], path + ".inflow_max")
                       : 2 * (ni > 0 ? cfg.nominal_inflow.maxCoeff() : 1);

  const json& caps = require(j, "caps", path);
  Vec normal = per_lane(require(caps, "normal", path + ".caps"), n, path + ".caps.normal");
  Vec extended =
      per_lane(require(caps, "extended", path + ".caps"), n, path + ".caps.extended");
  cfg.cap_gate_normal = caps.contains("normal_gate")
                            ? per_lane(caps["normal_gate"], n, path + ".caps.normal_gate")
                            : normal;
  cfg.cap_signal_normal = caps.contains("normal_signal")
                              ? per_lane(caps["normal_signal"], n, path + ".caps.normal_signal")
                              : normal;
  cfg.cap_gate_extended = caps.contains("extended_gate")
                              ? per_lane(caps["extended_gate"], n, path + ".caps.extended_gate")
                              : extended;
  cfg.cap_signal_extended =
      caps.contains("extended_signal")
          ? per_lane(caps["extended_signal"], n, path + ".caps.extended_signal")
          : extended;
  return cfg;
}

std::vector<UnitSpec> parse_units(const json& j, const NetworkSpec& spec,
                                  const std::string& path) {
  std::vector<UnitSpec> units;
  std::unordered_map<int, int> intersection_index;
  for (int m = 0; m < spec.n_intersections(); ++m) {
    intersection_index[spec.intersections[m].id] = m;
  }
  std::unordered_map<int, int> inlet_slot;
  for (int s = 0; s < spec.n_inlets(); ++s) inlet_slot[spec.id_of(spec.inlets[s])] = s;

  for (size_t u = 0; u < j.size(); ++u) {
    std::string up = path + "[" + std::to_string(u) + "]";
    const json& ju = j[u];
    UnitSpec unit;
    unit.id = as_int(require(ju, "id", up), up + ".id");
    for (const auto& m : require(ju, "intersections", up)) {
      int id = as_int(m, up + ".intersections");
      auto it = intersection_index.find(id);
      if (it == intersection_index.end()) {
        fail(up + ".intersections", "unknown intersection id " + std::to_string(id));
      }
      unit.intersections.push_back(it->second);
    }
    std::sort(unit.intersections.begin(), unit.intersections.end());
    for (const auto& l : require(ju, "lanes", up)) {
      unit.lanes.push_back(lane_ref(spec, l, up + ".lanes"));
    }
    std::sort(unit.lanes.begin(), unit.lanes.end());
    if (ju.contains("inlets")) {
      for (const auto& l : ju["inlets"]) {
        int id = as_int(l, up + ".inlets");
        auto it = inlet_slot.find(id);
        if (it == inlet_slot.end()) {
          fail(up + ".inlets", "lane " + std::to_string(id) + " is not an inlet");
        }
        unit.inlet_slots.push_back(it->second);
      }
      std::sort(unit.inlet_slots.begin(), unit.inlet_slots.end());
    }
    units.push_back(std::move(unit));
  }
  return units;
}

}  // namespace

Scenario parse_scenario(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    // Recover the line number from the byte offset for a readable message.
    size_t line = 1;
    for (size_t i = 0; i < e.byte && i < json_text.size(); ++i) {
      if (json_text[i] == '\n') ++line;
    }
    throw ScenarioError(origin + ":" + std::to_string(line) + ": " + e.what());
  }

  Scenario sc;
  sc.name = j.contains("name") ? j["name"].get<std::string>() : origin;
  sc.network = parse_network(require(j, "network", origin), origin + ".network");
  sc.controller =
      parse_controller(require(j, "controller", origin), sc.network, origin + ".controller");

  const json& init = require(j, "initial_state", origin);
  sc.initial_state =
      per_lane_int(init, sc.network.n_lanes(), origin + ".initial_state");

  if (j.contains("units")) {
    sc.units = parse_units(j["units"], sc.network, origin + ".units");
  }

  if (j.contains("emergencies")) {
    const json& evs = j["emergencies"];
    for (size_t e = 0; e < evs.size(); ++e) {
      std::string ep = origin + ".emergencies[" + std::to_string(e) + "]";
      EmergencyEvent ev;
      ev.time = as_int(require(evs[e], "time", ep), ep + ".time");
      ev.entry = lane_ref(sc.network, require(evs[e], "entry", ep), ep + ".entry");
      ev.exit = lane_ref(sc.network, require(evs[e], "exit", ep), ep + ".exit");
      ev.arrival = as_int(require(evs[e], "arrival", ep), ep + ".arrival");
      ev.traverse = as_int(require(evs[e], "traverse", ep), ep + ".traverse");
      ev.recovery = as_int(require(evs[e], "recovery", ep), ep + ".recovery");
      if (evs[e].contains("path")) {
        std::vector<int> path;
        for (const auto& l : evs[e]["path"]) {
          path.push_back(lane_ref(sc.network, l, ep + ".path"));
        }
        ev.forced_path = std::move(path);
      }
      sc.events.push_back(std::move(ev));
    }
  }

  if (j.contains("steps")) sc.steps = as_int(j["steps"], origin + ".steps");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      fail(origin + ".seed", "expected an integer");
    }
    sc.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("baseline_dwell")) {
    sc.baseline_dwell = as_int(j["baseline_dwell"], origin + ".baseline_dwell");
  }
  if (j.contains("ssd_window")) sc.ssd_window = as_int(j["ssd_window"], origin + ".ssd_window");
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), path);
}

std::vector<std::string> validate_scenario(const Scenario& sc) {
  std::vector<std::string> out = validate_network(sc.network).violations;
  const auto& cfg = sc.controller;
  const int n = sc.network.n_lanes();

  if (cfg.emergency_weight <= cfg.lane_weight.maxCoeff()) {
    out.push_back("controller: emergency weight must exceed every normal lane weight");
  }
  for (int i = 0; i < n; ++i) {
    if (cfg.cap_gate_extended[i] < cfg.cap_gate_normal[i] ||
        cfg.cap_signal_extended[i] < cfg.cap_signal_normal[i]) {
      out.push_back("controller: extended cap below normal cap at lane " +
                    std::to_string(sc.network.id_of(i)));
    }
    if (sc.initial_state[i] > cfg.cap_signal_normal[i]) {
      out.push_back("initial state exceeds the normal cap at lane " +
                    std::to_string(sc.network.id_of(i)));
    }
  }
  if (cfg.nominal_inflow.size() > 0 && cfg.nominal_inflow.maxCoeff() > cfg.inflow_max) {
    out.push_back("controller: nominal inflow exceeds inflow_max");
  }
  if (cfg.lane_weight.minCoeff() < 0.0) out.push_back("controller: negative lane weight");

  if (!sc.units.empty()) {
    std::set<int> lanes, slots, xs;
    for (const auto& u : sc.units) {
      for (int l : u.lanes) {
        if (!lanes.insert(l).second) {
          out.push_back("unit " + std::to_string(u.id) + ": lane " +
                        std::to_string(sc.network.id_of(l)) + " owned twice");
        }
      }
      for (int s : u.inlet_slots) {
        if (!slots.insert(s).second) {
          out.push_back("unit " + std::to_string(u.id) + ": inlet owned twice");
        }
      }
      for (int m : u.intersections) {
        if (!xs.insert(m).second) {
          out.push_back("unit " + std::to_string(u.id) + ": intersection owned twice");
        }
      }
    }
    if (static_cast<int>(lanes.size()) != n) {
      out.push_back("units do not cover every lane");
    }
    if (static_cast<int>(slots.size()) != sc.network.n_inlets()) {
      out.push_back("units do not cover every inlet");
    }
    if (static_cast<int>(xs.size()) != sc.network.n_intersections()) {
      out.push_back("units do not cover every intersection");
    }
  }

  int last_end = -1;
  for (const auto& ev : sc.events) {
    if (ev.time < 0 || ev.time >= sc.steps) {
      out.push_back("emergency at t=" + std::to_string(ev.time) + " outside the run length");
    }
    if (ev.time <= last_end) {
      out.push_back("emergency at t=" + std::to_string(ev.time) +
                    " overlaps the previous relaxation window");
    }
    last_end = ev.time + ev.arrival + ev.traverse + ev.recovery;
    if (enumerate_paths(sc.network, ev.entry, ev.exit).empty()) {
      out.push_back("no path from lane " + std::to_string(sc.network.id_of(ev.entry)) +
                    " to lane " + std::to_string(sc.network.id_of(ev.exit)));
    }
  }
  if (sc.ssd_window < 1 || sc.ssd_window > sc.steps + 1) {
    out.push_back("ssd_window outside [1, steps+1]");
  }
  return out;
}

std::vector<UnitSpec> single_unit_cover(const NetworkSpec& spec) {
  UnitSpec unit;
  unit.id = 1;
  unit.intersections.resize(spec.n_intersections());
  std::iota(unit.intersections.begin(), unit.intersections.end(), 0);
  unit.lanes.resize(spec.n_lanes());
  std::iota(unit.lanes.begin(), unit.lanes.end(), 0);
  unit.inlet_slots.resize(spec.n_inlets());
  std::iota(unit.inlet_slots.begin(), unit.inlet_slots.end(), 0);
  return {unit};
}

namespace {

json phase_to_json(const NetworkSpec& spec, const PhaseEntry& ph) {
  json j;
  j["p"] = ph.outflow_fraction;
  json splits = json::object();
  for (const auto& [to, q] : ph.splits) splits[std::to_string(spec.id_of(to))] = q;
  if (!splits.empty()) j["splits"] = splits;
  return j;
}

}  // namespace

std::string scenario_to_json(const Scenario& sc) {
  const NetworkSpec& net = sc.network;
  json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["steps"] = sc.steps;
  j["ssd_window"] = sc.ssd_window;
  j["baseline_dwell"] = sc.baseline_dwell;

  json jn;
  jn["lanes"] = net.lane_ids;
  json edges = json::array();
  for (const auto& [a, b] : net.edges) {
    edges.push_back({net.id_of(a), net.id_of(b)});
  }
  jn["edges"] = edges;
  json inlets = json::array();
  for (int s : net.inlets) inlets.push_back(net.id_of(s));
  jn["inlets"] = inlets;
  if (!net.opposite_pairs.empty()) {
    json op = json::array();
    for (const auto& [a, b] : net.opposite_pairs) op.push_back({net.id_of(a), net.id_of(b)});
    jn["opposite_pairs"] = op;
  }
  bool scalar_dist = true;
  for (int i = 1; i < net.n_lanes(); ++i) {
    if (net.disturbance_min[i] != net.disturbance_min[0] ||
        net.disturbance_max[i] != net.disturbance_max[0]) {
      scalar_dist = false;
    }
  }
  if (scalar_dist) {
    jn["disturbance"] = {{"lower", net.disturbance_min[0]}, {"upper", net.disturbance_max[0]}};
  } else {
    jn["disturbance"] = {
        {"lower", std::vector<int>(net.disturbance_min.data(),
                                   net.disturbance_min.data() + net.n_lanes())},
        {"upper", std::vector<int>(net.disturbance_max.data(),
                                   net.disturbance_max.data() + net.n_lanes())}};
  }
  json jxs = json::array();
  for (const auto& m : net.intersections) {
    json jm;
    jm["id"] = m.id;
    json lanes = json::array();
    for (int l : m.lanes) lanes.push_back(net.id_of(l));
    jm["lanes"] = lanes;
    json configs = json::array();
    for (const auto& c : m.configs) {
      json jc;
      jc["label"] = c.label;
      json green = json::object();
      for (size_t s = 0; s < m.lanes.size(); ++s) {
        if (c.phase[s].green) {
          green[std::to_string(net.id_of(m.lanes[s]))] = phase_to_json(net, c.phase[s]);
        }
      }
      jc["green"] = green;
      configs.push_back(jc);
    }
    jm["configs"] = configs;
    jxs.push_back(jm);
  }
  jn["intersections"] = jxs;
  // All shipped networks use one uncontrolled outflow fraction.
  for (int i = 0; i < net.n_lanes(); ++i) {
    if (net.controlling[i] < 0) {
      jn["uncontrolled"] = {{"outflow_fraction", net.uncontrolled[i].outflow_fraction}};
      break;
    }
  }
  j["network"] = jn;

  const auto& cfg = sc.controller;
  json jc;
  jc["horizon"] = cfg.horizon;
  bool scalar_w = (cfg.lane_weight.array() == cfg.lane_weight[0]).all();
  if (scalar_w) {
    jc["lane_weight"] = cfg.lane_weight[0];
  } else {
    jc["lane_weight"] =
        std::vector<double>(cfg.lane_weight.data(), cfg.lane_weight.data() + net.n_lanes());
  }
  jc["emergency_weight"] = cfg.emergency_weight;
  jc["inflow_weight"] = cfg.inflow_weight(0, 0);
  jc["nominal_inflow"] = std::vector<int>(cfg.nominal_inflow.data(),
                                          cfg.nominal_inflow.data() + net.n_inlets());
  jc["inflow_max"] = cfg.inflow_max;
  jc["caps"] = {{"normal", cfg.cap_signal_normal[0]}, {"extended", cfg.cap_signal_extended[0]}};
  j["controller"] = jc;

  if (!sc.units.empty()) {
    json ju = json::array();
    for (const auto& u : sc.units) {
      json one;
      one["id"] = u.id;
      json xs = json::array();
      for (int m : u.intersections) xs.push_back(net.intersections[m].id);
      one["intersections"] = xs;
      json lanes = json::array();
      for (int l : u.lanes) lanes.push_back(net.id_of(l));
      one["lanes"] = lanes;
      json slots = json::array();
      for (int s : u.inlet_slots) slots.push_back(net.id_of(net.inlets[s]));
      one["inlets"] = slots;
      ju.push_back(one);
    }
    j["units"] = ju;
  }

  if (!sc.events.empty()) {
    json je = json::array();
    for (const auto& ev : sc.events) {
      json one;
      one["time"] = ev.time;
      one["entry"] = net.id_of(ev.entry);
      one["exit"] = net.id_of(ev.exit);
      one["arrival"] = ev.arrival;
      one["traverse"] = ev.traverse;
      one["recovery"] = ev.recovery;
      if (ev.forced_path) {
        json p = json::array();
        for (int l : *ev.forced_path) p.push_back(net.id_of(l));
        one["path"] = p;
      }
      je.push_back(one);
    }
    j["emergencies"] = je;
  }

  json init = json::array();
  for (int i = 0; i < net.n_lanes(); ++i) init.push_back(sc.initial_state[i]);
  j["initial_state"] = init;
  return j.dump(2) + "\n";
}

}  // namespace ctmpc
