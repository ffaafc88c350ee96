#include <doctest.h>

#include "ctmpc/benchmark.hpp"
#include "ctmpc/decentralized.hpp"
#include "ctmpc/scenario.hpp"
#include "support/random_spec.hpp"

using namespace ctmpc;

namespace {

UnitPlans constant_plans(const UnitSpec& unit, int tf, int config_index, int inflow) {
  UnitPlans p;
  for (int k = 0; k < tf; ++k) {
    p.light_plan.push_back(std::vector<int>(unit.intersections.size(), config_index));
    p.inflow_plan.push_back(
        IntVec::Constant(static_cast<int>(unit.inlet_slots.size()), inflow));
  }
  return p;
}

}  // namespace

TEST_CASE("state estimation replays the previous decision without disturbance") {
  Scenario sc = benchmark::normal_scenario();
  const NetworkSpec& spec = sc.network;
  const int tf = sc.controller.horizon;

  AggregatorBundle bundle;
  bundle.t = 1;
  bundle.prev_state = sc.initial_state;
  for (const auto& unit : sc.units) {
    bundle.plans.push_back(constant_plans(unit, tf, 0, 4));
  }

  TrafficState estimate = estimate_global_state(bundle, spec, sc.units);

  SignalAction applied{{0, 0, 0, 0}};
  IntVec inflow = IntVec::Constant(3, 4);
  TrafficState expected =
      step_exact(spec, sc.initial_state, applied, inflow, IntVec::Zero(14));
  CHECK(estimate == expected);
}

TEST_CASE("estimation needs a complete bundle") {
  Scenario sc = benchmark::normal_scenario();
  AggregatorBundle bundle;
  bundle.t = 1;
  bundle.prev_state = sc.initial_state;
  bundle.plans.resize(2);  // two of four units missing
  CHECK_THROWS_AS(estimate_global_state(bundle, sc.network, sc.units), ProtocolError);
}

TEST_CASE("one-step estimation error is bounded by the disturbance box") {
  Rng rng(4040);
  NetworkSpec spec = benchmark::network();
  for (int trial = 0; trial < 200; ++trial) {
    TrafficState x = testing::random_state(spec, rng, 22);
    SignalAction a = testing::random_action(spec, rng);
    IntVec u(3);
    for (int j = 0; j < 3; ++j) u[j] = static_cast<int>(rng.bounded(9));
    IntVec d = sample_disturbance(spec, rng);
    TrafficState truth = step_exact(spec, x, a, u, d);
    TrafficState estimate = step_exact(spec, x, a, u, IntVec::Zero(14));
    CHECK((truth - estimate).cwiseAbs().maxCoeff() <= 2);
  }
}

TEST_CASE("patching replaces exactly the owned entries") {
  Scenario sc = benchmark::normal_scenario();
  const NetworkSpec& spec = sc.network;
  const UnitSpec& unit2 = sc.units[1];  // lanes 2, 3, 10

  TrafficState estimate = TrafficState::Constant(14, 5);
  std::vector<std::pair<int, int>> obs = {{spec.lane_of(2), 9},
                                          {spec.lane_of(3), 8},
                                          {spec.lane_of(10), 7}};
  TrafficState patched = patch_local_measurements(estimate, unit2, obs);
  CHECK(patched[spec.lane_of(2)] == 9);
  CHECK(patched[spec.lane_of(3)] == 8);
  CHECK(patched[spec.lane_of(10)] == 7);
  int untouched = 0;
  for (int i = 0; i < 14; ++i) {
    if (patched[i] == 5) ++untouched;
  }
  CHECK(untouched == 11);

  SUBCASE("observations equal to the estimate leave it unchanged") {
    std::vector<std::pair<int, int>> same = {{spec.lane_of(2), 5}};
    CHECK(patch_local_measurements(estimate, unit2, same) == estimate);
  }

  SUBCASE("outside ownership is rejected") {
    std::vector<std::pair<int, int>> bad = {{spec.lane_of(4), 3}};
    CHECK_THROWS_AS(patch_local_measurements(estimate, unit2, bad),
                    std::invalid_argument);
  }

  SUBCASE("disjoint patches commute") {
    const UnitSpec& unit3 = sc.units[2];
    std::vector<std::pair<int, int>> obs3 = {{spec.lane_of(6), 1},
                                             {spec.lane_of(7), 2}};
    TrafficState ab = patch_local_measurements(
        patch_local_measurements(estimate, unit2, obs), unit3, obs3);
    TrafficState ba = patch_local_measurements(
        patch_local_measurements(estimate, unit3, obs3), unit2, obs);
    CHECK(ab == ba);
  }
}

TEST_CASE("a single unit reproduces the centralized loop step for step") {
  Scenario sc = benchmark::normal_scenario();
  const NetworkSpec& spec = sc.network;

  CentralizedController central(spec, sc.controller, sc.seed, 0);
  DecentralizedController solo(spec, sc.controller, single_unit_cover(spec), sc.seed);

  Rng disturbances(mix64(sc.seed, stream::kDisturbance));
  TrafficState xc = sc.initial_state;
  TrafficState xd = sc.initial_state;
  for (int t = 0; t < 6; ++t) {
    Decision dc = central.step(xc, t, nullptr);
    RoundRecord round = solo.run_round(xd, t, nullptr);
    REQUIRE(round.decisions.size() == 1);
    CHECK(dc.inflow == round.applied_inflow);
    CHECK(dc.action.config == round.applied_action.config);
    CHECK(dc.stats.qp_nodes == round.decisions[0].stats.qp_nodes);
    CHECK(dc.stats.search_nodes == round.decisions[0].stats.search_nodes);

    IntVec d = sample_disturbance(spec, disturbances);
    xc = step_exact(spec, xc, dc.action, dc.inflow, d);
    xd = step_exact(spec, xd, round.applied_action, round.applied_inflow, d);
    CHECK(xc == xd);
  }
}

TEST_CASE("a unit without inlets skips the inflow step") {
  Scenario sc = benchmark::normal_scenario();
  DecentralizedController ctrl(sc.network, sc.controller, sc.units, sc.seed);
  RoundRecord round = ctrl.run_round(sc.initial_state, 0, nullptr);
  REQUIRE(round.decisions.size() == 4);
  const UnitDecision& unit4 = round.decisions[3];
  CHECK(unit4.stats.qp_nodes == 0);
  CHECK(unit4.stats.qp_objective == 0.0);
  for (const auto& u : unit4.plans.inflow_plan) CHECK(u.size() == 0);
  // Its light search still ran.
  CHECK(unit4.stats.search_nodes > 0);
}

TEST_CASE("rounds are sequenced and complete") {
  Scenario sc = benchmark::normal_scenario();
  DecentralizedController ctrl(sc.network, sc.controller, sc.units, sc.seed);
  RoundRecord r0 = ctrl.run_round(sc.initial_state, 0, nullptr);
  CHECK(r0.decisions.size() == 4);
  CHECK(r0.budget_ok);

  // Skipping a step breaks the plan-archive sequence.
  CHECK_THROWS_AS(ctrl.run_round(sc.initial_state, 2, nullptr), ProtocolError);
}

TEST_CASE("decentralized rounds replay identically under the same seed") {
  Scenario sc = benchmark::normal_scenario();
  const NetworkSpec& spec = sc.network;
  DecentralizedController a(spec, sc.controller, sc.units, 777);
  DecentralizedController b(spec, sc.controller, sc.units, 777);
  Rng da(mix64(777, stream::kDisturbance));
  Rng db(mix64(777, stream::kDisturbance));
  TrafficState xa = sc.initial_state, xb = sc.initial_state;
  for (int t = 0; t < 4; ++t) {
    RoundRecord ra = a.run_round(xa, t, nullptr);
    RoundRecord rb = b.run_round(xb, t, nullptr);
    CHECK(ra.applied_inflow == rb.applied_inflow);
    CHECK(ra.applied_action.config == rb.applied_action.config);
    xa = step_exact(spec, xa, ra.applied_action, ra.applied_inflow,
                    sample_disturbance(spec, da));
    xb = step_exact(spec, xb, rb.applied_action, rb.applied_inflow,
                    sample_disturbance(spec, db));
    CHECK(xa == xb);
  }
}

TEST_CASE("a unit owning no path lanes plans as in normal mode") {
  Scenario sc = benchmark::emergency_scenario();
  const NetworkSpec& spec = sc.network;

  EmergencyStatus status;
  status.arrival = 2;
  status.traverse = 2;
  status.recovery = 1;
  status.entry = spec.lane_of(8);
  status.exit = spec.lane_of(5);
  // Path through lanes 8, 13, 14, 5: unit 2 (lanes 2, 3, 10) owns none.
  status.path = {spec.lane_of(8), spec.lane_of(13), spec.lane_of(14),
                 spec.lane_of(5)};

  // Equal caps in both regimes isolate the weight effect.
  ControllerConfig cfg = sc.controller;
  cfg.cap_gate_extended = cfg.cap_gate_normal;
  cfg.cap_signal_extended = cfg.cap_signal_normal;

  DecentralizedController with_emergency(spec, cfg, sc.units, 55);
  DecentralizedController without(spec, cfg, sc.units, 55);

  AggregatorBundle be = with_emergency.make_bundle(0, &status);
  AggregatorBundle bn = without.make_bundle(0, nullptr);
  be.prev_state = sc.initial_state;
  bn.prev_state = sc.initial_state;
  be.first = true;
  bn.first = true;

  TrafficState corrected = sc.initial_state;
  UnitDecision de = with_emergency.plan_local(1, be, corrected);
  UnitDecision dn = without.plan_local(1, bn, corrected);
  CHECK(de.plans.light_plan == dn.plans.light_plan);
  for (size_t k = 0; k < de.plans.inflow_plan.size(); ++k) {
    CHECK(de.plans.inflow_plan[k] == dn.plans.inflow_plan[k]);
  }

  // Unit 1 owns path lane 8; the emergency weighting shows in its cost.
  UnitDecision u1e = with_emergency.plan_local(0, be, corrected);
  UnitDecision u1n = without.plan_local(0, bn, corrected);
  CHECK(u1e.stats.search_objective != u1n.stats.search_objective);
}

TEST_CASE("ownership must partition the network") {
  Scenario sc = benchmark::normal_scenario();
  auto units = sc.units;
  units[0].lanes.push_back(sc.network.lane_of(2));  // lane 2 owned twice
  CHECK_THROWS_AS(DecentralizedController(sc.network, sc.controller, units, 1),
                  std::invalid_argument);

  auto missing = sc.units;
  missing[3].lanes.pop_back();
  CHECK_THROWS_AS(DecentralizedController(sc.network, sc.controller, missing, 1),
                  std::invalid_argument);
}
