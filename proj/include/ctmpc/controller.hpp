#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "ctmpc/inflow_qp.hpp"
#include "ctmpc/network.hpp"
#include "ctmpc/plan_search.hpp"

namespace ctmpc {

struct ControllerConfig {
  int horizon = 4;
  Vec lane_weight;           // density penalty per lane, normal mode
  double emergency_weight = 100.0;  // path-lane penalty while the vehicle is en route
  Mat inflow_weight;         // deviation penalty on the gate inflows
  IntVec nominal_inflow;     // per inlet, constant schedule
  int inflow_max = 0;
  // Density caps: the gate step constrains the linear-model band, the
  // signal step the rounded-model band. Extended caps apply while an
  // emergency relaxation is in force.
  Vec cap_gate_normal, cap_signal_normal;
  Vec cap_gate_extended, cap_signal_extended;
};

// Emergency bookkeeping: countdowns until the vehicle enters, must have
// left, and the recovery budget, plus the candidate and selected paths.
struct EmergencyStatus {
  int arrival = 0;
  int traverse = 0;
  int recovery = 0;
  int entry = -1;
  int exit = -1;
  std::vector<std::vector<int>> candidates;  // lane-index paths
  std::vector<int> path;                     // selected path, empty until chosen

  bool active() const { return arrival > 0 || traverse > 0 || recovery > 0; }
  int relax_steps() const { return arrival + traverse + recovery; }
};

// Decrements the leading nonzero countdown (arrival, then traverse, then
// recovery). Once all are zero the controller is back in normal mode.
EmergencyStatus advance_mode(const EmergencyStatus& status);

// All simple directed lane paths from entry to exit, ordered
// lexicographically by external lane id.
std::vector<std::vector<int>> enumerate_paths(const NetworkSpec& spec, int entry_lane,
                                              int exit_lane);

// Stage weights over the horizon: the emergency weight sits on the path
// lanes while the vehicle may still be in the network (prediction index
// up to arrival + traverse), the normal weights everywhere else.
std::vector<Vec> emergency_stage_weights(const ControllerConfig& config,
                                         const EmergencyStatus& status);

// Cap schedule for prediction steps 1..horizon: the extended set through
// the relaxation window, the normal set afterwards.
std::vector<Vec> two_regime_caps(const Vec& normal, const Vec& extended, int relax_steps,
                                 int horizon);

struct SolveStats {
  double qp_objective = 0.0;
  double search_objective = 0.0;
  int qp_margin = 0;       // cap inflation applied by the feasibility fallback
  int search_margin = 0;
  long qp_nodes = 0;
  long search_nodes = 0;
};

struct Decision {
  IntVec inflow;        // applied gate inflows U(t), global inlet order
  SignalAction action;  // applied configuration
  std::vector<IntVec> inflow_plan;  // full horizon, global inlet order
  SignalPlan signal_plan;
  SolveStats stats;
  double wall_ms = 0.0;
};

// Shared two-step solve: an integer QP for the decision inlets under a
// fixed light plan, then a pruned search over the candidate light plans
// with those inflows fixed. Mode (normal vs emergency) and ownership
// (centralized vs per-unit) enter only through the weights, caps,
// candidate sets, and decision slots.
struct TwoStepInputs {
  int horizon = 0;
  TrafficState x0;
  Vec x0_uncertainty;                    // elementwise slack of x0 known only by estimate
  SignalPlan fixed_plan;                 // light plan assumed while choosing inflows
  std::vector<Vec> stage_weights;        // per prediction index 0..horizon-1
  std::vector<Vec> cap_gate;             // per prediction index 1..horizon
  std::vector<Vec> cap_signal;
  Mat theta;                             // over decision slots
  std::vector<IntVec> u_nom_dec;         // per step, decision slots only
  int inflow_max = 0;
  std::vector<int> decision_slots;       // inlet columns owned by this solve
  std::vector<IntVec> fixed_inflows;     // per step, global inlet order, zero on decision slots
  std::vector<std::shared_ptr<const StageActions>> stage_candidates;
};

struct TwoStepResult {
  std::vector<IntVec> u_plan_dec;  // per step, decision slots only
  SignalPlan signal_plan;
  SolveStats stats;
};

TwoStepResult two_step_solve(const NetworkSpec& spec, const TwoStepInputs& in);

class CentralizedController {
 public:
  CentralizedController(const NetworkSpec& spec, const ControllerConfig& config,
                        std::uint64_t scenario_seed, int unit_index = 0);

  // One receding-horizon step. A null status (or an inactive one) plans in
  // normal mode. The warm start is managed internally: the previous
  // optimal plan shifted by one, or fresh random draws on the first call.
  Decision step(const TrafficState& x, int t, const EmergencyStatus* status);

  // Solves the emergency problem for every candidate path and picks the
  // one with the least predicted path density over the traversal window;
  // returns that path and keeps its decision as the applied one.
  std::vector<int> select_emergency_path(const TrafficState& x, int t,
                                         EmergencyStatus& status, Decision* decision);

  // Explicit-warm entry points (the receding-horizon wrapper above passes
  // the shifted previous plan; warm has length horizon-1).
  Decision plan_normal(const TrafficState& x, int t, const SignalPlan& warm);
  Decision plan_emergency(const TrafficState& x, int t, const EmergencyStatus& status,
                          const SignalPlan& warm);

  SignalPlan warm_start() const;  // shifted previous plan or bootstrap draws
  const NetworkSpec& spec() const { return spec_; }
  const ControllerConfig& config() const { return config_; }

 private:
  Decision plan_with_schedules(const TrafficState& x, int t,
                               const std::vector<Vec>& stage_weights,
                               const std::vector<Vec>& cap_gate,
                               const std::vector<Vec>& cap_signal, const SignalPlan& warm);

  const NetworkSpec& spec_;
  ControllerConfig config_;
  std::uint64_t stream_;
  std::shared_ptr<const StageActions> all_actions_;
  SignalPlan previous_plan_;
  bool has_previous_ = false;
};

}  // namespace ctmpc
