#include "ctmpc/controller.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "ctmpc/reachability.hpp"

namespace ctmpc {

namespace {
constexpr double kRelaxPenalty = 1e6;
}

EmergencyStatus advance_mode(const EmergencyStatus& status) {
  EmergencyStatus next = status;
  if (next.arrival > 0) {
    --next.arrival;
  } else if (next.traverse > 0) {
    --next.traverse;
  } else if (next.recovery > 0) {
    --next.recovery;
  }
  return next;
}

namespace {

void paths_dfs(const NetworkSpec& spec, int lane, int exit_lane, std::vector<int>& current,
               std::vector<bool>& visited, std::vector<std::vector<int>>& out) {
  if (lane == exit_lane) {
    out.push_back(current);
    return;
  }
  for (int next : spec.out_edges[lane]) {
    if (visited[next]) continue;
    visited[next] = true;
    current.push_back(next);
    paths_dfs(spec, next, exit_lane, current, visited, out);
    current.pop_back();
    visited[next] = false;
  }
}

}  // namespace

std::vector<std::vector<int>> enumerate_paths(const NetworkSpec& spec, int entry_lane,
                                              int exit_lane) {
  std::vector<std::vector<int>> out;
  std::vector<int> current{entry_lane};
  std::vector<bool> visited(spec.n_lanes(), false);
  visited[entry_lane] = true;
  paths_dfs(spec, entry_lane, exit_lane, current, visited, out);
  return out;
}

TwoStepResult two_step_solve(const NetworkSpec& spec, const TwoStepInputs& in) {
  const int tf = in.horizon;
  const int nd = static_cast<int>(in.decision_slots.size());
  TwoStepResult result;

  std::vector<Vec> fixed_lane_inflow(tf, Vec::Zero(spec.n_lanes()));
  for (int k = 0; k < tf; ++k) {
    for (int j = 0; j < spec.n_inlets(); ++j) {
      fixed_lane_inflow[k][spec.inlets[j]] += in.fixed_inflows[k][j];
    }
  }

  // Step 1: integer inflow QP under a fixed light plan; infeasibility is
  // absorbed by the smallest per-row cap inflation.
  auto solve_inflows = [&](const SignalPlan& plan, std::vector<IntVec>& u_plan,
                           int& margin, double& objective) {
    u_plan.assign(tf, IntVec::Zero(nd));
    margin = 0;
    objective = 0.0;
    if (nd == 0) return;
    InflowQpInputs qpi;
    qpi.x0 = in.x0;
    qpi.x0_uncertainty = in.x0_uncertainty;
    qpi.tendency.clear();
    for (const auto& a : plan) qpi.tendency.push_back(tendency_matrix(spec, a));
    qpi.stage_weights = in.stage_weights;
    qpi.theta = in.theta;
    qpi.u_nom = in.u_nom_dec;
    qpi.caps = in.cap_gate;
    qpi.inflow_max = in.inflow_max;
    qpi.fixed_lane_inflow = fixed_lane_inflow;
    qpi.decision_slots = in.decision_slots;
    InflowQp qp = build_inflow_qp(spec, qpi);

    IntQpResult qr = solve_integer_qp(qp);
    result.stats.qp_nodes += qr.nodes;
    if (!qr.feasible) {
      IntVec margins = infeasibility_margins(qp);
      qr = solve_integer_qp(with_inflated_caps(qp, margins));
      result.stats.qp_nodes += qr.nodes;
      if (!qr.feasible) {
        throw std::runtime_error("inflow QP infeasible even after cap relaxation");
      }
      margin = margins.maxCoeff();
    }
    objective = qr.objective + kRelaxPenalty * margin;
    for (int k = 0; k < tf; ++k) u_plan[k] = qr.u.segment(k * nd, nd);
  };

  // Step 2: pruned search over the candidate light plans with the chosen
  // inflows held fixed.
  auto make_search = [&](const std::vector<IntVec>& u_plan) {
    PlanSearchProblem sp;
    sp.x0 = in.x0.cast<double>();
    sp.x0_upper = sp.x0;
    if (in.x0_uncertainty.size() == sp.x0.size()) sp.x0_upper += in.x0_uncertainty;
    sp.stage_weights = in.stage_weights;
    sp.d_max = spec.disturbance_max.cast<double>();
    sp.stages.resize(tf);
    for (int k = 0; k < tf; ++k) {
      Vec bu = fixed_lane_inflow[k];
      for (int j = 0; j < nd; ++j) {
        bu[spec.inlets[in.decision_slots[j]]] += u_plan[k][j];
      }
      sp.stages[k].actions = in.stage_candidates[k];
      sp.stages[k].lane_inflow = std::move(bu);
      sp.stages[k].cap = in.cap_signal[k];
    }
    return sp;
  };

  std::vector<IntVec> u_plan;
  int qp_margin = 0;
  double qp_objective = 0.0;
  solve_inflows(in.fixed_plan, u_plan, qp_margin, qp_objective);

  PlanSearchProblem sp = make_search(u_plan);
  PlanSearchResult sr = search_signal_plan(sp, in.fixed_plan);
  result.stats.search_nodes += sr.stats.nodes;
  if (sr.feasible) {
    result.u_plan_dec = std::move(u_plan);
    result.stats.qp_margin = qp_margin;
    result.stats.qp_objective = qp_objective;
    result.stats.search_objective = sr.cost;
    result.signal_plan = std::move(sr.plan);
    return result;
  }

  RelaxedPlanResult first = search_signal_plan_relaxed(sp);
  result.stats.search_nodes += first.stats.nodes;

  // The chosen inflows and the relaxed plan disagree about which lanes go
  // unserved. Re-choosing the inflows under the plan the search wants
  // usually restores feasibility outright; keep whichever pair violates
  // less.
  std::vector<IntVec> u_repair;
  int qp_margin_repair = 0;
  double qp_objective_repair = 0.0;
  solve_inflows(first.plan, u_repair, qp_margin_repair, qp_objective_repair);

  PlanSearchProblem sp2 = make_search(u_repair);
  PlanSearchResult sr2 = search_signal_plan(sp2, first.plan);
  result.stats.search_nodes += sr2.stats.nodes;
  if (sr2.feasible) {
    result.u_plan_dec = std::move(u_repair);
    result.stats.qp_margin = qp_margin_repair;
    result.stats.qp_objective = qp_objective_repair;
    result.stats.search_objective = sr2.cost;
    result.signal_plan = std::move(sr2.plan);
    return result;
  }

  RelaxedPlanResult second = search_signal_plan_relaxed(sp2);
  result.stats.search_nodes += second.stats.nodes;
  const bool keep_second =
      std::lexicographical_compare(second.step_margins.begin(), second.step_margins.end(),
                                   first.step_margins.begin(), first.step_margins.end()) ||
      second.step_margins == first.step_margins;
  const RelaxedPlanResult& chosen = keep_second ? second : first;
  result.u_plan_dec = keep_second ? std::move(u_repair) : std::move(u_plan);
  result.stats.qp_margin = keep_second ? qp_margin_repair : qp_margin;
  result.stats.qp_objective = keep_second ? qp_objective_repair : qp_objective;
  result.stats.search_margin = chosen.margin;
  result.stats.search_objective = chosen.cost + kRelaxPenalty * chosen.margin;
  result.signal_plan = chosen.plan;
  return result;
}

CentralizedController::CentralizedController(const NetworkSpec& spec,
                                             const ControllerConfig& config,
                                             std::uint64_t scenario_seed, int unit_index)
    : spec_(spec),
      config_(config),
      stream_(controller_stream(scenario_seed, unit_index)) {
  auto actions = std::make_shared<StageActions>();
  actions->actions = spec.all_actions();
  actions->tendency.reserve(actions->actions.size());
  for (const auto& a : actions->actions) {
    actions->tendency.push_back(tendency_matrix(spec, a));
  }
  all_actions_ = std::move(actions);
}

SignalPlan CentralizedController::warm_start() const {
  SignalPlan warm;
  const int tf = config_.horizon;
  if (has_previous_) {
    warm.assign(previous_plan_.begin() + 1, previous_plan_.end());
  } else {
    // First call: no previous solution exists, so the warm plan is drawn
    // from the action space.
    for (int k = 0; k + 1 < tf; ++k) {
      long idx = static_cast<long>(
          hash_draw(stream_, stream::kWarm, static_cast<std::uint64_t>(k), 0) %
          static_cast<std::uint64_t>(spec_.n_actions()));
      warm.push_back(spec_.action_from_index(idx));
    }
  }
  return warm;
}

Decision CentralizedController::plan_with_schedules(const TrafficState& x, int t,
                                                    const std::vector<Vec>& stage_weights,
                                                    const std::vector<Vec>& cap_gate,
                                                    const std::vector<Vec>& cap_signal,
                                                    const SignalPlan& warm) {
  const auto start_time = std::chrono::steady_clock::now();
  const int tf = config_.horizon;
  if (static_cast<int>(warm.size()) != tf - 1) {
    throw std::invalid_argument("warm start must have horizon-1 actions");
  }

  TwoStepInputs in;
  in.horizon = tf;
  in.x0 = x;
  in.x0_uncertainty = Vec::Zero(spec_.n_lanes());
  in.fixed_plan = warm;
  long tail_idx = static_cast<long>(
      hash_draw(stream_, stream::kTail, static_cast<std::uint64_t>(t), 0) %
      static_cast<std::uint64_t>(spec_.n_actions()));
  in.fixed_plan.push_back(spec_.action_from_index(tail_idx));

  in.stage_weights = stage_weights;
  in.cap_gate = cap_gate;
  in.cap_signal = cap_signal;
  in.theta = config_.inflow_weight;
  in.inflow_max = config_.inflow_max;
  in.decision_slots.resize(spec_.n_inlets());
  for (int j = 0; j < spec_.n_inlets(); ++j) in.decision_slots[j] = j;
  in.u_nom_dec.assign(tf, config_.nominal_inflow);
  in.fixed_inflows.assign(tf, IntVec::Zero(spec_.n_inlets()));
  in.stage_candidates.assign(tf, all_actions_);

  TwoStepResult two = two_step_solve(spec_, in);

  Decision d;
  d.inflow_plan = std::move(two.u_plan_dec);
  d.signal_plan = std::move(two.signal_plan);
  d.inflow = d.inflow_plan.empty() ? IntVec::Zero(spec_.n_inlets()) : d.inflow_plan.front();
  d.action = d.signal_plan.front();
  d.stats = two.stats;

  previous_plan_ = d.signal_plan;
  has_previous_ = true;
  d.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                        start_time)
                  .count();
  return d;
}

Decision CentralizedController::plan_normal(const TrafficState& x, int t,
                                            const SignalPlan& warm) {
  const int tf = config_.horizon;
  std::vector<Vec> weights(tf, config_.lane_weight);
  std::vector<Vec> cap_gate(tf, config_.cap_gate_normal);
  std::vector<Vec> cap_signal(tf, config_.cap_signal_normal);
  return plan_with_schedules(x, t, weights, cap_gate, cap_signal, warm);
}

std::vector<Vec> emergency_stage_weights(const ControllerConfig& config,
                                         const EmergencyStatus& status) {
  const int priority_window = status.arrival + status.traverse;
  std::vector<Vec> weights(config.horizon, config.lane_weight);
  for (int k = 0; k <= std::min(priority_window, config.horizon - 1); ++k) {
    for (int lane : status.path) weights[k][lane] = config.emergency_weight;
  }
  return weights;
}

std::vector<Vec> two_regime_caps(const Vec& normal, const Vec& extended, int relax_steps,
                                 int horizon) {
  std::vector<Vec> caps;
  caps.reserve(horizon);
  for (int k = 1; k <= horizon; ++k) {
    caps.push_back(k <= relax_steps ? extended : normal);
  }
  return caps;
}

Decision CentralizedController::plan_emergency(const TrafficState& x, int t,
                                               const EmergencyStatus& status,
                                               const SignalPlan& warm) {
  return plan_with_schedules(
      x, t, emergency_stage_weights(config_, status),
      two_regime_caps(config_.cap_gate_normal, config_.cap_gate_extended,
                      status.relax_steps(), config_.horizon),
      two_regime_caps(config_.cap_signal_normal, config_.cap_signal_extended,
                      status.relax_steps(), config_.horizon),
      warm);
}

Decision CentralizedController::step(const TrafficState& x, int t,
                                     const EmergencyStatus* status) {
  SignalPlan warm = warm_start();
  if (status && (status->active() || !status->path.empty())) {
    return plan_emergency(x, t, *status, warm);
  }
  return plan_normal(x, t, warm);
}

std::vector<int> CentralizedController::select_emergency_path(const TrafficState& x, int t,
                                                              EmergencyStatus& status,
                                                              Decision* decision) {
  if (status.candidates.empty()) {
    throw std::invalid_argument("emergency path selection needs a nonempty candidate set");
  }
  const SignalPlan warm = warm_start();
  const SignalPlan saved_prev = previous_plan_;
  const bool saved_has_prev = has_previous_;

  const int window = std::min(status.arrival + status.traverse, config_.horizon);
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<int> best_path;
  Decision best_decision;

  for (const auto& candidate : status.candidates) {
    EmergencyStatus trial = status;
    trial.path = candidate;
    previous_plan_ = saved_prev;
    has_previous_ = saved_has_prev;
    Decision d = plan_emergency(x, t, trial, warm);

    // Predicted disturbance-free path density over the traversal window,
    // under the decision this candidate produced.
    std::vector<IntVec> inflows(config_.horizon, IntVec::Zero(spec_.n_inlets()));
    for (int k = 0; k < config_.horizon; ++k) inflows[k] = d.inflow_plan[k];
    PredictionTrace trace = predict_rounded_df(spec_, x, d.signal_plan, inflows);
    double score = 0.0;
    for (int k = 1; k <= window; ++k) {
      for (int lane : candidate) score += trace.x[k][lane];
    }
    if (score < best_score) {
      best_score = score;
      best_path = candidate;
      best_decision = std::move(d);
    }
  }

  status.path = best_path;
  previous_plan_ = best_decision.signal_plan;
  has_previous_ = true;
  if (decision) *decision = std::move(best_decision);
  return best_path;
}

}  // namespace ctmpc
