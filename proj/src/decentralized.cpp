#include "ctmpc/decentralized.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <set>
#include <stdexcept>

namespace ctmpc {

long UnitSpec::n_local_actions(const NetworkSpec& spec) const {
  long n = 1;
  for (int m : intersections) {
    n *= static_cast<long>(spec.intersections[m].configs.size());
  }
  return n;
}

std::vector<int> UnitSpec::local_action_from_index(const NetworkSpec& spec,
                                                   long index) const {
  std::vector<int> cfg(intersections.size(), 0);
  for (int p = static_cast<int>(intersections.size()) - 1; p >= 0; --p) {
    long mu = static_cast<long>(spec.intersections[intersections[p]].configs.size());
    cfg[p] = static_cast<int>(index % mu);
    index /= mu;
  }
  return cfg;
}

TrafficState estimate_global_state(const AggregatorBundle& bundle, const NetworkSpec& spec,
                                   const std::vector<UnitSpec>& units) {
  if (bundle.plans.size() != units.size()) {
    throw ProtocolError("bundle is missing unit plan entries");
  }
  if (bundle.first) return bundle.prev_state;

  SignalAction action;
  action.config.assign(spec.n_intersections(), 0);
  IntVec inflow = IntVec::Zero(spec.n_inlets());
  for (size_t j = 0; j < units.size(); ++j) {
    const auto& plans = bundle.plans[j];
    if (plans.light_plan.empty() ||
        plans.light_plan[0].size() != units[j].intersections.size()) {
      throw ProtocolError("unit " + std::to_string(units[j].id) +
                          " archived an ill-formed light plan");
    }
    for (size_t p = 0; p < units[j].intersections.size(); ++p) {
      action.config[units[j].intersections[p]] = plans.light_plan[0][p];
    }
    if (!units[j].inlet_slots.empty()) {
      if (plans.inflow_plan.empty() ||
          plans.inflow_plan[0].size() != static_cast<int>(units[j].inlet_slots.size())) {
        throw ProtocolError("unit " + std::to_string(units[j].id) +
                            " archived an ill-formed inflow plan");
      }
      for (size_t p = 0; p < units[j].inlet_slots.size(); ++p) {
        inflow[units[j].inlet_slots[p]] = plans.inflow_plan[0][p];
      }
    }
  }
  return step_exact(spec, bundle.prev_state, action, inflow,
                    IntVec::Zero(spec.n_lanes()));
}

TrafficState patch_local_measurements(const TrafficState& estimate, const UnitSpec& unit,
                                      const std::vector<std::pair<int, int>>& observed) {
  TrafficState patched = estimate;
  for (const auto& [lane, value] : observed) {
    if (std::find(unit.lanes.begin(), unit.lanes.end(), lane) == unit.lanes.end()) {
      throw std::invalid_argument("observation of lane index " + std::to_string(lane) +
                                  " outside unit " + std::to_string(unit.id) +
                                  " ownership");
    }
    patched[lane] = value;
  }
  return patched;
}

DecentralizedController::DecentralizedController(const NetworkSpec& spec,
                                                 const ControllerConfig& config,
                                                 std::vector<UnitSpec> units,
                                                 std::uint64_t scenario_seed)
    : spec_(spec), config_(config), units_(std::move(units)) {
  owner_of_intersection_.assign(spec.n_intersections(), -1);
  slot_in_owner_.assign(spec.n_intersections(), -1);
  std::set<int> seen_lanes, seen_slots;
  for (size_t j = 0; j < units_.size(); ++j) {
    streams_.push_back(controller_stream(scenario_seed, static_cast<int>(j)));
    for (size_t p = 0; p < units_[j].intersections.size(); ++p) {
      int m = units_[j].intersections[p];
      if (owner_of_intersection_.at(m) >= 0) {
        throw std::invalid_argument("intersection owned by two units");
      }
      owner_of_intersection_[m] = static_cast<int>(j);
      slot_in_owner_[m] = static_cast<int>(p);
    }
    for (int lane : units_[j].lanes) {
      if (!seen_lanes.insert(lane).second) {
        throw std::invalid_argument("lane owned by two units");
      }
    }
    for (int s : units_[j].inlet_slots) {
      if (!seen_slots.insert(s).second) {
        throw std::invalid_argument("inlet slot owned by two units");
      }
    }
  }
  for (int m = 0; m < spec.n_intersections(); ++m) {
    if (owner_of_intersection_[m] < 0) {
      throw std::invalid_argument("intersection " + std::to_string(spec.intersections[m].id) +
                                  " has no owning unit");
    }
  }
  if (static_cast<int>(seen_lanes.size()) != spec.n_lanes() ||
      static_cast<int>(seen_slots.size()) != spec.n_inlets()) {
    throw std::invalid_argument("unit ownership must partition lanes and inlets");
  }
}

AggregatorBundle DecentralizedController::make_bundle(int t,
                                                      const EmergencyStatus* status) const {
  AggregatorBundle bundle;
  bundle.t = t;
  bundle.first = !bootstrapped_;
  bundle.prev_state = prev_state_;
  if (bundle.first) {
    bundle.plans.assign(units_.size(), UnitPlans{});
  } else {
    bundle.plans = archive_;
  }
  if (status) bundle.emergency = *status;
  return bundle;
}

UnitDecision DecentralizedController::plan_local(int unit_index,
                                                 const AggregatorBundle& bundle,
                                                 const TrafficState& corrected) {
  const auto start_time = std::chrono::steady_clock::now();
  const int tf = config_.horizon;
  const int m_units = static_cast<int>(units_.size());
  const UnitSpec& self = units_[unit_index];

  // Every other unit is assumed to follow its previous plan shifted by
  // one, a randomized light tail, and a nominal inflow tail. On the first
  // round the assumed light plans are drawn entirely at random and the
  // assumed inflows sit at their nominals. Random draws for unit i come
  // from unit i's own stream, so every unit assumes the tails unit i
  // actually uses.
  std::vector<std::vector<std::vector<int>>> lights(m_units);
  std::vector<std::vector<IntVec>> inflows(m_units);
  for (int i = 0; i < m_units; ++i) {
    const UnitSpec& target = units_[i];
    auto& plan = lights[i];
    if (bundle.first) {
      for (int k = 0; k + 1 < tf; ++k) {
        long idx = static_cast<long>(
            hash_draw(streams_[i], stream::kWarm, static_cast<std::uint64_t>(k),
                      static_cast<std::uint64_t>(i)) %
            static_cast<std::uint64_t>(target.n_local_actions(spec_)));
        plan.push_back(target.local_action_from_index(spec_, idx));
      }
    } else {
      const auto& prev = bundle.plans[i].light_plan;
      if (static_cast<int>(prev.size()) != tf) {
        throw ProtocolError("archived light plan has the wrong horizon");
      }
      plan.assign(prev.begin() + 1, prev.end());
    }
    long tail = static_cast<long>(
        hash_draw(streams_[i], stream::kTail, static_cast<std::uint64_t>(bundle.t),
                  static_cast<std::uint64_t>(i)) %
        static_cast<std::uint64_t>(target.n_local_actions(spec_)));
    plan.push_back(target.local_action_from_index(spec_, tail));

    if (i == unit_index) continue;
    IntVec nominal(static_cast<int>(target.inlet_slots.size()));
    for (size_t p = 0; p < target.inlet_slots.size(); ++p) {
      nominal[static_cast<int>(p)] = config_.nominal_inflow[target.inlet_slots[p]];
    }
    auto& uplan = inflows[i];
    if (bundle.first) {
      uplan.assign(tf, nominal);
    } else {
      const auto& prev = bundle.plans[i].inflow_plan;
      if (static_cast<int>(prev.size()) != tf) {
        throw ProtocolError("archived inflow plan has the wrong horizon");
      }
      uplan.assign(prev.begin() + 1, prev.end());
      uplan.push_back(nominal);
    }
  }

  // Combine the per-unit assumptions into global fixed actions/inflows.
  SignalPlan fixed_plan(tf);
  std::vector<IntVec> fixed_inflows(tf, IntVec::Zero(spec_.n_inlets()));
  for (int k = 0; k < tf; ++k) {
    fixed_plan[k].config.assign(spec_.n_intersections(), 0);
    for (int m = 0; m < spec_.n_intersections(); ++m) {
      fixed_plan[k].config[m] = lights[owner_of_intersection_[m]][k][slot_in_owner_[m]];
    }
    for (int i = 0; i < m_units; ++i) {
      if (i == unit_index) continue;
      for (size_t p = 0; p < units_[i].inlet_slots.size(); ++p) {
        fixed_inflows[k][units_[i].inlet_slots[p]] = inflows[i][k][static_cast<int>(p)];
      }
    }
  }

  // Local weights and caps: owned lanes carry the configured values
  // (including the emergency overlay on owned path lanes), everything
  // else is unweighted and unconstrained.
  const double inf = std::numeric_limits<double>::infinity();
  Vec weight_mask = Vec::Zero(spec_.n_lanes());
  for (int lane : self.lanes) weight_mask[lane] = 1.0;

  const EmergencyStatus* status =
      bundle.emergency && (bundle.emergency->active() || !bundle.emergency->path.empty())
          ? &*bundle.emergency
          : nullptr;

  std::vector<Vec> stage_weights =
      status ? emergency_stage_weights(config_, *status)
             : std::vector<Vec>(tf, config_.lane_weight);
  for (auto& w : stage_weights) w = w.cwiseProduct(weight_mask);

  std::vector<Vec> cap_gate =
      status ? two_regime_caps(config_.cap_gate_normal, config_.cap_gate_extended,
                               status->relax_steps(), tf)
             : std::vector<Vec>(tf, config_.cap_gate_normal);
  std::vector<Vec> cap_signal =
      status ? two_regime_caps(config_.cap_signal_normal, config_.cap_signal_extended,
                               status->relax_steps(), tf)
             : std::vector<Vec>(tf, config_.cap_signal_normal);
  for (auto* sched : {&cap_gate, &cap_signal}) {
    for (auto& cap : *sched) {
      Vec masked = Vec::Constant(spec_.n_lanes(), inf);
      for (int lane : self.lanes) masked[lane] = cap[lane];
      cap = std::move(masked);
    }
  }

  // Non-owned entries of the corrected state are one-step estimates and
  // carry up to the disturbance magnitude in error; the first shared
  // state is exact for everyone.
  Vec uncertainty = Vec::Zero(spec_.n_lanes());
  if (!bundle.first) {
    for (int lane = 0; lane < spec_.n_lanes(); ++lane) {
      if (weight_mask[lane] > 0.0) continue;
      uncertainty[lane] = std::max<double>(std::abs(spec_.disturbance_min[lane]),
                                           std::abs(spec_.disturbance_max[lane]));
    }
  }

  // The assumed neighbor plans only approximate what the other units
  // apply this round, and the realized state depends on nothing beyond
  // the applied step. Tighten the first-step caps of owned lanes by the
  // worst extra discharge a foreign intersection could send into them
  // over the assumed configuration; later steps keep the plain fixed-plan
  // propagation and are re-planned next round anyway.
  {
    Vec x_up = corrected.cast<double>() + uncertainty;
    for (int lane : self.lanes) {
      double slack = 0.0;
      for (const auto& [from, to] : spec_.edges) {
        if (to != lane) continue;
        int m = spec_.controlling[from];
        if (m < 0 || owner_of_intersection_[m] == unit_index) continue;
        auto rate_into = [&](const PhaseEntry& ph) {
          for (const auto& [dest, q] : ph.splits) {
            if (dest == lane) return q * ph.outflow_fraction;
          }
          return 0.0;
        };
        double assumed = rate_into(spec_.phase(from, fixed_plan[0]));
        double worst = 0.0;
        for (const auto& cfg : spec_.intersections[m].configs) {
          worst = std::max(worst, rate_into(cfg.phase[spec_.lane_slot[from]]));
        }
        slack += std::max(0.0, worst - assumed) * x_up[from];
      }
      if (slack > 1e-12) {
        double tighten = std::ceil(slack - 1e-9);
        cap_gate[0][lane] -= tighten;
        cap_signal[0][lane] -= tighten;
      }
    }
  }

  TwoStepInputs in;
  in.horizon = tf;
  in.x0 = corrected;
  in.x0_uncertainty = uncertainty;
  in.fixed_plan = fixed_plan;
  in.stage_weights = std::move(stage_weights);
  in.cap_gate = std::move(cap_gate);
  in.cap_signal = std::move(cap_signal);
  const int nd = static_cast<int>(self.inlet_slots.size());
  in.theta = Mat(nd, nd);
  for (int a = 0; a < nd; ++a) {
    for (int b = 0; b < nd; ++b) {
      in.theta(a, b) = config_.inflow_weight(self.inlet_slots[a], self.inlet_slots[b]);
    }
  }
  IntVec nom(nd);
  for (int a = 0; a < nd; ++a) nom[a] = config_.nominal_inflow[self.inlet_slots[a]];
  in.u_nom_dec.assign(tf, nom);
  in.inflow_max = config_.inflow_max;
  in.decision_slots = self.inlet_slots;
  in.fixed_inflows = std::move(fixed_inflows);

  // Candidate actions: this unit's local configurations substituted into
  // the fixed global action of each step.
  const long n_local = self.n_local_actions(spec_);
  in.stage_candidates.resize(tf);
  for (int k = 0; k < tf; ++k) {
    auto stage = std::make_shared<StageActions>();
    stage->actions.reserve(n_local);
    stage->tendency.reserve(n_local);
    for (long c = 0; c < n_local; ++c) {
      SignalAction a = fixed_plan[k];
      std::vector<int> local = self.local_action_from_index(spec_, c);
      for (size_t p = 0; p < self.intersections.size(); ++p) {
        a.config[self.intersections[p]] = local[p];
      }
      stage->tendency.push_back(tendency_matrix(spec_, a));
      stage->actions.push_back(std::move(a));
    }
    in.stage_candidates[k] = std::move(stage);
  }

  TwoStepResult two = two_step_solve(spec_, in);

  UnitDecision decision;
  decision.unit = unit_index;
  decision.stats = two.stats;
  decision.plans.inflow_plan = std::move(two.u_plan_dec);
  decision.plans.light_plan.resize(tf);
  for (int k = 0; k < tf; ++k) {
    auto& local = decision.plans.light_plan[k];
    local.resize(self.intersections.size());
    for (size_t p = 0; p < self.intersections.size(); ++p) {
      local[p] = two.signal_plan[k].config[self.intersections[p]];
    }
  }
  decision.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start_time)
                         .count();
  return decision;
}

RoundRecord DecentralizedController::run_round(const TrafficState& measured, int t,
                                               const EmergencyStatus* status) {
  if (t != next_t_) {
    throw ProtocolError("round sequence mismatch: expected " + std::to_string(next_t_) +
                        ", got " + std::to_string(t));
  }
  if (!bootstrapped_) prev_state_ = measured;

  AggregatorBundle bundle = make_bundle(t, status);

  RoundRecord record;
  record.t = t;
  record.applied_inflow = IntVec::Zero(spec_.n_inlets());
  record.applied_action.config.assign(spec_.n_intersections(), 0);

  for (size_t j = 0; j < units_.size(); ++j) {
    TrafficState estimate = estimate_global_state(bundle, spec_, units_);
    std::vector<std::pair<int, int>> observed;
    observed.reserve(units_[j].lanes.size());
    for (int lane : units_[j].lanes) observed.emplace_back(lane, measured[lane]);
    TrafficState corrected = patch_local_measurements(estimate, units_[j], observed);
    record.decisions.push_back(plan_local(static_cast<int>(j), bundle, corrected));
  }

  std::vector<UnitPlans> new_archive;
  for (size_t j = 0; j < units_.size(); ++j) {
    const UnitDecision& d = record.decisions[j];
    for (size_t p = 0; p < units_[j].intersections.size(); ++p) {
      record.applied_action.config[units_[j].intersections[p]] = d.plans.light_plan[0][p];
    }
    for (size_t p = 0; p < units_[j].inlet_slots.size(); ++p) {
      record.applied_inflow[units_[j].inlet_slots[p]] =
          d.plans.inflow_plan[0][static_cast<int>(p)];
    }
    record.max_unit_ms = std::max(record.max_unit_ms, d.wall_ms);
    new_archive.push_back(d.plans);
  }
  record.budget_ok = record.max_unit_ms <= 30000.0;

  archive_ = std::move(new_archive);
  prev_state_ = measured;
  next_t_ = t + 1;
  bootstrapped_ = true;
  return record;
}

}  // namespace ctmpc
