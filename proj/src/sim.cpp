#include "ctmpc/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace ctmpc {

using nlohmann::json;

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Centralized: return "centralized";
    case ControllerKind::Decentralized: return "decentralized";
    case ControllerKind::Baseline: return "baseline";
  }
  return "?";
}

std::optional<ControllerKind> controller_from_string(const std::string& name) {
  if (name == "centralized") return ControllerKind::Centralized;
  if (name == "decentralized") return ControllerKind::Decentralized;
  if (name == "baseline") return ControllerKind::Baseline;
  return std::nullopt;
}

const TrafficState& RunRecord::state_at(int t) const {
  if (t < length()) return steps[t].state;
  return final_state;
}

SignalAction baseline_action(const NetworkSpec& spec, int t, int dwell) {
  SignalAction a;
  a.config.resize(spec.n_intersections());
  for (int m = 0; m < spec.n_intersections(); ++m) {
    int mu = static_cast<int>(spec.intersections[m].configs.size());
    a.config[m] = (t / std::max(dwell, 1)) % mu;
  }
  return a;
}

namespace {

// The vehicle's own path choice in the decentralized scheme: the
// candidate with the least current density, ties to the first in path
// order.
std::vector<int> vehicle_path_choice(const std::vector<std::vector<int>>& candidates,
                                     const TrafficState& x) {
  std::vector<int> best;
  long best_load = 0;
  for (const auto& p : candidates) {
    long load = 0;
    for (int lane : p) load += x[lane];
    if (best.empty() || load < best_load) {
      best = p;
      best_load = load;
    }
  }
  return best;
}

}  // namespace

RunRecord run_closed_loop(const Scenario& scenario, ControllerKind kind,
                          std::optional<std::uint64_t> seed_override,
                          std::optional<int> steps_override,
                          std::vector<RoundRecord>* round_log) {
  const NetworkSpec& spec = scenario.network;
  const std::uint64_t seed = seed_override.value_or(scenario.seed);
  const int total_steps = steps_override.value_or(scenario.steps);

  RunRecord record;
  record.scenario_name = scenario.name;
  record.controller = kind;
  record.seed = seed;

  std::optional<CentralizedController> central;
  std::optional<DecentralizedController> decentral;
  if (kind == ControllerKind::Centralized) {
    central.emplace(spec, scenario.controller, seed, 0);
  } else if (kind == ControllerKind::Decentralized) {
    if (scenario.units.empty()) {
      throw RunAbort("scenario declares no control units for the decentralized scheme");
    }
    decentral.emplace(spec, scenario.controller, scenario.units, seed);
  }

  Rng disturbance_rng(mix64(seed, stream::kDisturbance));
  TrafficState x = scenario.initial_state;
  std::optional<EmergencyStatus> status;
  size_t next_event = 0;

  for (int t = 0; t < total_steps; ++t) {
    // Emergency bookkeeping: a fresh notification opens a status; an
    // existing one counts down once per step until it expires.
    bool notification = false;
    if (next_event < scenario.events.size() && scenario.events[next_event].time == t) {
      const EmergencyEvent& ev = scenario.events[next_event];
      ++next_event;
      EmergencyStatus s;
      s.arrival = ev.arrival;
      s.traverse = ev.traverse;
      s.recovery = ev.recovery;
      s.entry = ev.entry;
      s.exit = ev.exit;
      s.candidates = ev.forced_path ? std::vector<std::vector<int>>{*ev.forced_path}
                                    : enumerate_paths(spec, ev.entry, ev.exit);
      if (s.candidates.empty()) {
        throw RunAbort("emergency event has no feasible path");
      }
      status = s;
      notification = true;
      record.event_time = t;
      record.traversal_end = t + ev.arrival + ev.traverse;
    } else if (status) {
      *status = advance_mode(*status);
      if (!status->active()) status.reset();
    }

    StepLog log;
    log.state = x;
    log.emergency = status.has_value();

    switch (kind) {
      case ControllerKind::Baseline: {
        log.action = baseline_action(spec, t, scenario.baseline_dwell);
        log.inflow = scenario.controller.nominal_inflow.cwiseMin(
            IntVec::Constant(spec.n_inlets(), scenario.controller.inflow_max));
        break;
      }
      case ControllerKind::Centralized: {
        Decision d;
        if (notification) {
          record.selected_path = central->select_emergency_path(x, t, *status, &d);
        } else {
          d = central->step(x, t, status ? &*status : nullptr);
        }
        log.inflow = d.inflow;
        log.action = d.action;
        log.stats = d.stats;
        log.wall_ms = d.wall_ms;
        break;
      }
      case ControllerKind::Decentralized: {
        if (notification) {
          // The vehicle picks its own path and shares it via the
          // aggregator.
          status->path = vehicle_path_choice(status->candidates, x);
          record.selected_path = status->path;
        }
        RoundRecord round = decentral->run_round(x, t, status ? &*status : nullptr);
        log.inflow = round.applied_inflow;
        log.action = round.applied_action;
        for (const auto& ud : round.decisions) {
          log.stats.qp_nodes += ud.stats.qp_nodes;
          log.stats.search_nodes += ud.stats.search_nodes;
          log.stats.qp_objective += ud.stats.qp_objective;
          log.stats.search_objective += ud.stats.search_objective;
          log.stats.qp_margin = std::max(log.stats.qp_margin, ud.stats.qp_margin);
          log.stats.search_margin = std::max(log.stats.search_margin, ud.stats.search_margin);
          log.wall_ms += ud.wall_ms;
        }
        if (round_log) round_log->push_back(std::move(round));
        break;
      }
    }

    IntVec d = sample_disturbance(spec, disturbance_rng);
    x = step_exact(spec, x, log.action, log.inflow, d);
    record.steps.push_back(std::move(log));
  }
  record.final_state = x;
  return record;
}

Metrics compute_metrics(const RunRecord& record, const Scenario& scenario,
                        const std::optional<std::vector<int>>& path_override,
                        std::optional<int> window_override) {
  const NetworkSpec& spec = scenario.network;
  Metrics m;
  const int total = record.length();
  const int window = std::min(window_override.value_or(scenario.ssd_window), total + 1);

  double acc = 0.0;
  for (int t = total - window + 1; t <= total; ++t) {
    acc += record.state_at(t).cast<double>().mean();
  }
  m.ssd = acc / window;

  const std::vector<int>& path =
      path_override ? *path_override : record.selected_path;
  if (record.event_time >= 0 && !path.empty()) {
    double dep = 0.0;
    int count = 0;
    for (int t = record.event_time; t <= std::min(record.traversal_end, total); ++t) {
      for (int lane : path) dep += record.state_at(t)[lane];
      ++count;
    }
    if (count > 0) m.dep = dep / count;
  }

  for (const auto& s : record.steps) {
    m.mean_step_ms += s.wall_ms;
    m.max_step_ms = std::max(m.max_step_ms, s.wall_ms);
    if (s.stats.qp_margin > 0 || s.stats.search_margin > 0) ++m.relax_events;
  }
  if (total > 0) m.mean_step_ms /= total;

  // A state x(t) sits in a relaxation window when the decision that
  // produced it was taken in emergency mode.
  for (int t = 0; t <= total; ++t) {
    const TrafficState& x = record.state_at(t);
    m.max_density = std::max(m.max_density, static_cast<double>(x.maxCoeff()));
    bool relaxed = t > 0 && record.steps[t - 1].emergency;
    for (int i = 0; i < spec.n_lanes(); ++i) {
      if (relaxed) {
        if (x[i] > scenario.controller.cap_signal_extended[i]) ++m.violations_extended;
      } else {
        if (x[i] > scenario.controller.cap_signal_normal[i]) ++m.violations_normal;
      }
    }
  }
  return m;
}

std::string RunRecord::canonical(const NetworkSpec& spec) const {
  std::ostringstream os;
  os << "scenario=" << scenario_name << " controller=" << to_string(controller)
     << " seed=" << seed << " steps=" << length() << "\n";
  if (event_time >= 0) {
    os << "emergency t=" << event_time << " path=";
    for (size_t i = 0; i < selected_path.size(); ++i) {
      os << (i ? "-" : "") << spec.id_of(selected_path[i]);
    }
    os << "\n";
  }
  char buf[64];
  for (int t = 0; t < length(); ++t) {
    const StepLog& s = steps[t];
    os << t << " x=";
    for (int i = 0; i < s.state.size(); ++i) os << (i ? "," : "") << s.state[i];
    os << " u=";
    for (int i = 0; i < s.inflow.size(); ++i) os << (i ? "," : "") << s.inflow[i];
    os << " lam=";
    for (size_t i = 0; i < s.action.config.size(); ++i) {
      os << (i ? "," : "") << s.action.config[i];
    }
    os << " mode=" << (s.emergency ? "emergency" : "normal");
    std::snprintf(buf, sizeof(buf), "%.17g", s.stats.qp_objective);
    os << " qp_obj=" << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", s.stats.search_objective);
    os << " search_obj=" << buf;
    os << " margins=" << s.stats.qp_margin << "," << s.stats.search_margin;
    os << " nodes=" << s.stats.qp_nodes << "," << s.stats.search_nodes << "\n";
  }
  os << "final x=";
  for (int i = 0; i < final_state.size(); ++i) os << (i ? "," : "") << final_state[i];
  os << "\n";
  return os.str();
}

std::string run_to_csv(const RunRecord& record, const NetworkSpec& spec) {
  std::ostringstream os;
  os << "t";
  for (int i = 0; i < spec.n_lanes(); ++i) os << ",x_" << spec.id_of(i);
  for (int j = 0; j < spec.n_inlets(); ++j) os << ",u_" << spec.id_of(spec.inlets[j]);
  for (const auto& m : spec.intersections) os << ",lam_" << m.id;
  os << ",mode,ms\n";

  char buf[32];
  for (int t = 0; t <= record.length(); ++t) {
    os << t;
    const TrafficState& x = record.state_at(t);
    for (int i = 0; i < x.size(); ++i) os << "," << x[i];
    if (t < record.length()) {
      const StepLog& s = record.steps[t];
      for (int j = 0; j < s.inflow.size(); ++j) os << "," << s.inflow[j];
      for (size_t m = 0; m < s.action.config.size(); ++m) os << "," << s.action.config[m] + 1;
      os << "," << (s.emergency ? "emergency" : "normal");
      std::snprintf(buf, sizeof(buf), "%.3f", s.wall_ms);
      os << "," << buf;
    } else {
      for (int j = 0; j < spec.n_inlets() + spec.n_intersections(); ++j) os << ",";
      os << ",,";
    }
    os << "\n";
  }
  return os.str();
}

ParsedRun parse_run_csv(const std::string& csv, const NetworkSpec& spec) {
  ParsedRun out;
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty CSV");
  const int n = spec.n_lanes();
  const int ni = spec.n_inlets();
  const int nm = spec.n_intersections();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    // A trailing empty cell is dropped by getline; normalize.
    while (static_cast<int>(cells.size()) < 1 + n + ni + nm + 2) cells.push_back("");
    TrafficState x(n);
    for (int i = 0; i < n; ++i) x[i] = std::stoi(cells[1 + i]);
    out.states.push_back(x);
    if (cells[1 + n].empty()) continue;  // final state row
    IntVec u(ni);
    for (int j = 0; j < ni; ++j) u[j] = std::stoi(cells[1 + n + j]);
    SignalAction a;
    for (int m = 0; m < nm; ++m) a.config.push_back(std::stoi(cells[1 + n + ni + m]) - 1);
    out.inflows.push_back(u);
    out.actions.push_back(a);
    out.emergency.push_back(cells[1 + n + ni + nm] == "emergency");
  }
  return out;
}

namespace {

json metrics_to_json(const Metrics& m) {
  json j;
  j["ssd"] = m.ssd;
  if (m.dep) j["dep"] = *m.dep;
  j["mean_step_ms"] = m.mean_step_ms;
  j["max_step_ms"] = m.max_step_ms;
  j["violations_normal"] = m.violations_normal;
  j["violations_extended"] = m.violations_extended;
  j["relax_events"] = m.relax_events;
  j["max_density"] = m.max_density;
  return j;
}

}  // namespace

std::string run_summary_text(const RunRecord& record, const Metrics& m) {
  std::ostringstream os;
  os << "scenario:  " << record.scenario_name << "\n"
     << "controller: " << to_string(record.controller) << "\n"
     << "seed:      " << record.seed << "\n"
     << "steps:     " << record.length() << "\n"
     << "ssd:       " << m.ssd << "\n";
  if (m.dep) os << "dep:       " << *m.dep << "\n";
  os << "mean step ms: " << m.mean_step_ms << "\n"
     << "max step ms:  " << m.max_step_ms << "\n"
     << "cap violations (normal/extended): " << m.violations_normal << "/"
     << m.violations_extended << "\n"
     << "relaxation fallbacks: " << m.relax_events << "\n"
     << "max density: " << m.max_density << "\n";
  return os.str();
}

std::string run_summary_json(const RunRecord& record, const Metrics& m) {
  json j;
  j["scenario"] = record.scenario_name;
  j["controller"] = to_string(record.controller);
  j["seed"] = record.seed;
  j["steps"] = record.length();
  j["metrics"] = metrics_to_json(m);
  if (record.event_time >= 0) {
    j["emergency"] = {{"time", record.event_time}, {"traversal_end", record.traversal_end}};
  }
  return j.dump(2) + "\n";
}

BatchResult run_batch(const Scenario& scenario, int runs,
                      const std::vector<ControllerKind>& kinds) {
  BatchResult result;
  result.runs = runs;

  struct Acc {
    double ssd = 0.0, dep = 0.0, ms = 0.0, base_dep_on_own_paths = 0.0;
    long viol_n = 0, viol_e = 0, relax = 0;
    int dep_count = 0;
  };
  std::vector<Acc> acc(kinds.size());

  const bool has_event = !scenario.events.empty();
  for (int r = 0; r < runs; ++r) {
    std::uint64_t seed = scenario.seed + static_cast<std::uint64_t>(r);
    std::optional<RunRecord> baseline_record;
    std::vector<RunRecord> records(kinds.size());
    for (size_t k = 0; k < kinds.size(); ++k) {
      records[k] = run_closed_loop(scenario, kinds[k], seed);
      if (kinds[k] == ControllerKind::Baseline) baseline_record = records[k];
    }
    for (size_t k = 0; k < kinds.size(); ++k) {
      Metrics m = compute_metrics(records[k], scenario);
      acc[k].ssd += m.ssd;
      acc[k].ms += m.mean_step_ms;
      acc[k].viol_n += m.violations_normal;
      acc[k].viol_e += m.violations_extended;
      acc[k].relax += m.relax_events;
      if (has_event && m.dep) {
        acc[k].dep += *m.dep;
        ++acc[k].dep_count;
        if (baseline_record && kinds[k] != ControllerKind::Baseline) {
          Metrics mb =
              compute_metrics(*baseline_record, scenario, records[k].selected_path);
          if (mb.dep) acc[k].base_dep_on_own_paths += *mb.dep;
        }
      }
    }
  }

  double baseline_ssd = 0.0, centralized_ms = 0.0;
  for (size_t k = 0; k < kinds.size(); ++k) {
    if (kinds[k] == ControllerKind::Baseline) baseline_ssd = acc[k].ssd / runs;
    if (kinds[k] == ControllerKind::Centralized) centralized_ms = acc[k].ms / runs;
  }

  for (size_t k = 0; k < kinds.size(); ++k) {
    BatchRow row;
    row.kind = kinds[k];
    row.mean_ssd = acc[k].ssd / runs;
    row.ssd_norm = baseline_ssd > 0 ? row.mean_ssd / baseline_ssd : 1.0;
    row.mean_step_ms = acc[k].ms / runs;
    row.ct_norm = centralized_ms > 0 ? row.mean_step_ms / centralized_ms : 1.0;
    row.violations_normal = acc[k].viol_n;
    row.violations_extended = acc[k].viol_e;
    row.relax_events = acc[k].relax;
    if (acc[k].dep_count > 0) {
      row.mean_dep = acc[k].dep / acc[k].dep_count;
      if (kinds[k] != ControllerKind::Baseline && acc[k].base_dep_on_own_paths > 0) {
        row.dep_norm = acc[k].dep / acc[k].base_dep_on_own_paths;
      } else if (kinds[k] == ControllerKind::Baseline) {
        row.dep_norm = 1.0;
      }
    }
    result.rows.push_back(row);
  }
  return result;
}

std::string BatchResult::table() const {
  std::ostringstream os;
  os << "runs: " << runs << "\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %10s %10s %10s %10s %12s %8s %8s\n", "controller",
                "mean SSD", "SSD(norm)", "mean DEP", "DEP(norm)", "mean CT[ms]", "CT(norm)",
                "viol");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %10.4f %10.4f %10s %10s %12.4f %8.4f %5ld/%ld\n",
                  to_string(r.kind), r.mean_ssd, r.ssd_norm,
                  r.mean_dep ? std::to_string(*r.mean_dep).substr(0, 9).c_str() : "-",
                  r.dep_norm ? std::to_string(*r.dep_norm).substr(0, 9).c_str() : "-",
                  r.mean_step_ms, r.ct_norm, r.violations_normal, r.violations_extended);
    os << buf;
  }
  return os.str();
}

std::string batch_summary_json(const BatchResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows) {
    json row;
    row["controller"] = to_string(r.kind);
    row["mean_ssd"] = r.mean_ssd;
    row["ssd_norm"] = r.ssd_norm;
    if (r.mean_dep) row["mean_dep"] = *r.mean_dep;
    if (r.dep_norm) row["dep_norm"] = *r.dep_norm;
    row["mean_step_ms"] = r.mean_step_ms;
    row["ct_norm"] = r.ct_norm;
    row["violations_normal"] = r.violations_normal;
    row["violations_extended"] = r.violations_extended;
    row["relax_events"] = r.relax_events;
    rows.push_back(row);
  }
  json j;
  j["runs"] = result.runs;
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

SweepResult sweep_horizon(const Scenario& scenario, const std::vector<int>& horizons,
                          int runs, ControllerKind kind) {
  SweepResult result;
  for (int tf : horizons) {
    if (tf < 1) throw std::invalid_argument("horizon values must be at least 1");
    Scenario sc = scenario;
    sc.controller.horizon = tf;
    double ssd = 0.0, ms = 0.0;
    for (int r = 0; r < runs; ++r) {
      RunRecord rec = run_closed_loop(sc, kind, scenario.seed + static_cast<std::uint64_t>(r));
      Metrics m = compute_metrics(rec, sc);
      ssd += m.ssd;
      ms += m.mean_step_ms;
    }
    SweepRow row;
    row.horizon = tf;
    row.mean_ssd = ssd / runs;
    row.mean_step_ms = ms / runs;
    result.rows.push_back(row);
  }
  if (!result.rows.empty()) {
    double base_ssd = result.rows.front().mean_ssd;
    double base_ms = result.rows.front().mean_step_ms;
    for (auto& row : result.rows) {
      row.ssd_norm = base_ssd > 0 ? row.mean_ssd / base_ssd : 1.0;
      row.ct_norm = base_ms > 0 ? row.mean_step_ms / base_ms : 1.0;
    }
  }
  return result;
}

std::string SweepResult::table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%8s %10s %10s %12s %10s\n", "horizon", "mean SSD",
                "SSD(norm)", "mean CT[ms]", "CT(norm)");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%8d %10.4f %10.4f %12.4f %10.4f\n", r.horizon,
                  r.mean_ssd, r.ssd_norm, r.mean_step_ms, r.ct_norm);
    os << buf;
  }
  return os.str();
}

std::string sweep_summary_json(const SweepResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"horizon", r.horizon},
                    {"mean_ssd", r.mean_ssd},
                    {"ssd_norm", r.ssd_norm},
                    {"mean_step_ms", r.mean_step_ms},
                    {"ct_norm", r.ct_norm}});
  }
  json j;
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::string round_log_jsonl(const std::vector<RoundRecord>& rounds,
                            const std::vector<UnitSpec>& units) {
  std::ostringstream os;
  for (const auto& round : rounds) {
    json j;
    j["t"] = round.t;
    j["budget_ok"] = round.budget_ok;
    j["max_unit_ms"] = round.max_unit_ms;
    json inflow = json::array();
    for (int i = 0; i < round.applied_inflow.size(); ++i) {
      inflow.push_back(round.applied_inflow[i]);
    }
    j["applied_inflow"] = inflow;
    json cfg = json::array();
    for (int c : round.applied_action.config) cfg.push_back(c + 1);
    j["applied_config"] = cfg;
    json decisions = json::array();
    for (const auto& d : round.decisions) {
      json jd;
      jd["unit"] = units[d.unit].id;
      json lights = json::array();
      for (const auto& step : d.plans.light_plan) {
        json one = json::array();
        for (int c : step) one.push_back(c + 1);
        lights.push_back(one);
      }
      jd["light_plan"] = lights;
      json inflows = json::array();
      for (const auto& step : d.plans.inflow_plan) {
        json one = json::array();
        for (int i = 0; i < step.size(); ++i) one.push_back(step[i]);
        inflows.push_back(one);
      }
      jd["inflow_plan"] = inflows;
      jd["wall_ms"] = d.wall_ms;
      decisions.push_back(jd);
    }
    j["units"] = decisions;
    os << j.dump() << "\n";
  }
  return os.str();
}

}  // namespace ctmpc
