#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ctmpc/controller.hpp"
#include "ctmpc/network.hpp"

namespace ctmpc {

// One control unit: the intersections whose lights it sets, the lanes it
// measures and constrains, and the inlet columns it gates. Lanes,
// intersections, and inlet slots each partition the network across units.
struct UnitSpec {
  int id = 0;
  std::vector<int> intersections;  // indices into NetworkSpec::intersections
  std::vector<int> lanes;          // owned lane indices
  std::vector<int> inlet_slots;    // owned columns of the inlet matrix

  long n_local_actions(const NetworkSpec& spec) const;
  std::vector<int> local_action_from_index(const NetworkSpec& spec, long index) const;
};

// A unit's horizon solution: one configuration per owned intersection and
// one inflow vector over its inlet slots, per step.
struct UnitPlans {
  std::vector<std::vector<int>> light_plan;
  std::vector<IntVec> inflow_plan;
};

// What every unit receives from the aggregator at the start of a round:
// the previous global state, every unit's previous solution, and the
// emergency information when one is active. The nominal inflow schedule
// and the flow-fraction tables travel via the shared scenario objects.
struct AggregatorBundle {
  int t = 0;
  bool first = false;       // bootstrap round: prev_state holds x(0)
  TrafficState prev_state;  // x(t-1)
  std::vector<UnitPlans> plans;
  std::optional<EmergencyStatus> emergency;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UnitDecision {
  int unit = 0;
  UnitPlans plans;
  SolveStats stats;
  double wall_ms = 0.0;
};

struct RoundRecord {
  int t = 0;
  std::vector<UnitDecision> decisions;
  IntVec applied_inflow;       // global inlet order
  SignalAction applied_action;
  double max_unit_ms = 0.0;
  bool budget_ok = true;  // every unit finished within the 30 s control period
};

// Predicts x(t) from the bundle's state and the previously applied
// decisions, assuming a zero disturbance.
TrafficState estimate_global_state(const AggregatorBundle& bundle, const NetworkSpec& spec,
                                   const std::vector<UnitSpec>& units);

// Overwrites the unit's owned entries with its own measurements; throws on
// an observation outside the unit's ownership.
TrafficState patch_local_measurements(const TrafficState& estimate, const UnitSpec& unit,
                                      const std::vector<std::pair<int, int>>& observed);

// Per-intersection control units around a central aggregator. Each round
// the aggregator broadcasts the bundle, every unit solves its local
// two-step problem against the other units' previous plans, and the
// aggregator assembles and archives the results.
class DecentralizedController {
 public:
  DecentralizedController(const NetworkSpec& spec, const ControllerConfig& config,
                          std::vector<UnitSpec> units, std::uint64_t scenario_seed);

  // Runs one full round at time t against the measured state. The
  // emergency status, when present, already carries the shared path.
  RoundRecord run_round(const TrafficState& measured, int t,
                        const EmergencyStatus* status);

  AggregatorBundle make_bundle(int t, const EmergencyStatus* status) const;
  UnitDecision plan_local(int unit_index, const AggregatorBundle& bundle,
                          const TrafficState& corrected);

  const std::vector<UnitSpec>& units() const { return units_; }

 private:
  const NetworkSpec& spec_;
  ControllerConfig config_;
  std::vector<UnitSpec> units_;
  std::vector<std::uint64_t> streams_;
  std::vector<int> owner_of_intersection_;  // intersection -> unit
  std::vector<int> slot_in_owner_;          // intersection -> position within owner
  // Aggregator archive.
  std::vector<UnitPlans> archive_;
  TrafficState prev_state_;
  int next_t_ = 0;
  bool bootstrapped_ = false;
};

}  // namespace ctmpc
