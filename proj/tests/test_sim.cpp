#include <doctest.h>

#include "ctmpc/benchmark.hpp"
#include "ctmpc/sim.hpp"

using namespace ctmpc;

namespace {

// One lane behind a permanently red light, no inlets, no disturbance;
// the baseline cycles through the single configuration.
Scenario frozen_scenario() {
  Scenario sc;
  sc.name = "frozen";
  NetworkSpec& spec = sc.network;
  spec.lane_ids = {1, 2};
  spec.lane_index = {{1, 0}, {2, 1}};
  spec.edges = {{0, 1}};
  spec.out_edges = {{1}, {}};
  spec.disturbance_min = IntVec::Zero(2);
  spec.disturbance_max = IntVec::Zero(2);
  spec.controlling = {0, -1};
  spec.lane_slot = {0, -1};
  Intersection m;
  m.id = 1;
  m.lanes = {0};
  m.configs = {LocalConfig{"red", {PhaseEntry{}}}};
  spec.intersections = {m};
  spec.uncontrolled.assign(2, PhaseEntry{});
  spec.uncontrolled[1] = PhaseEntry{true, 0.0, {}};

  sc.controller.horizon = 2;
  sc.controller.lane_weight = Vec::Ones(2);
  sc.controller.emergency_weight = 100.0;
  sc.controller.inflow_weight = Mat::Zero(0, 0);
  sc.controller.nominal_inflow = IntVec();
  sc.controller.inflow_max = 0;
  sc.controller.cap_gate_normal = Vec::Constant(2, 50.0);
  sc.controller.cap_signal_normal = Vec::Constant(2, 50.0);
  sc.controller.cap_gate_extended = Vec::Constant(2, 55.0);
  sc.controller.cap_signal_extended = Vec::Constant(2, 55.0);
  sc.initial_state = TrafficState(2);
  sc.initial_state << 9, 4;
  sc.steps = 8;
  sc.seed = 3;
  sc.ssd_window = 3;
  return sc;
}

}  // namespace

TEST_CASE("a frozen network stays frozen under the baseline") {
  Scenario sc = frozen_scenario();
  RunRecord rec = run_closed_loop(sc, ControllerKind::Baseline);
  for (int t = 0; t <= rec.length(); ++t) {
    CHECK(rec.state_at(t)[0] == 9);
    CHECK(rec.state_at(t)[1] == 4);
  }
  Metrics m = compute_metrics(rec, sc);
  CHECK(m.ssd == doctest::Approx((9.0 + 4.0) / 2.0));
}

TEST_CASE("baseline cycles configurations with the configured dwell") {
  NetworkSpec spec = benchmark::network();
  SUBCASE("dwell of two holds each configuration twice") {
    std::vector<int> seen;
    for (int t = 0; t < 6; ++t) seen.push_back(baseline_action(spec, t, 2).config[0]);
    CHECK(seen == std::vector<int>{0, 0, 1, 1, 0, 0});
  }
  SUBCASE("dwell of one alternates every step") {
    std::vector<int> seen;
    for (int t = 0; t < 4; ++t) seen.push_back(baseline_action(spec, t, 1).config[0]);
    CHECK(seen == std::vector<int>{0, 1, 0, 1});
  }
}

TEST_CASE("identical runs are byte-for-byte identical") {
  Scenario sc = benchmark::normal_scenario();
  sc.steps = 8;
  for (ControllerKind kind : {ControllerKind::Baseline, ControllerKind::Centralized,
                              ControllerKind::Decentralized}) {
    RunRecord a = run_closed_loop(sc, kind);
    RunRecord b = run_closed_loop(sc, kind);
    CHECK(a.canonical(sc.network) == b.canonical(sc.network));
  }
}

TEST_CASE("different seeds give different trajectories") {
  Scenario sc = benchmark::normal_scenario();
  sc.steps = 8;
  RunRecord a = run_closed_loop(sc, ControllerKind::Baseline, 1);
  RunRecord b = run_closed_loop(sc, ControllerKind::Baseline, 2);
  CHECK(a.canonical(sc.network) != b.canonical(sc.network));
}

TEST_CASE("the CSV round-trips the logged trajectory") {
  Scenario sc = benchmark::normal_scenario();
  sc.steps = 6;
  RunRecord rec = run_closed_loop(sc, ControllerKind::Centralized);
  std::string csv = run_to_csv(rec, sc.network);
  ParsedRun parsed = parse_run_csv(csv, sc.network);

  REQUIRE(parsed.states.size() == static_cast<size_t>(rec.length()) + 1);
  REQUIRE(parsed.inflows.size() == static_cast<size_t>(rec.length()));
  for (int t = 0; t <= rec.length(); ++t) CHECK(parsed.states[t] == rec.state_at(t));
  for (int t = 0; t < rec.length(); ++t) {
    CHECK(parsed.inflows[t] == rec.steps[t].inflow);
    CHECK(parsed.actions[t].config == rec.steps[t].action.config);
    CHECK(parsed.emergency[t] == rec.steps[t].emergency);
  }
}

TEST_CASE("a zero-step run logs only the initial state") {
  Scenario sc = benchmark::normal_scenario();
  RunRecord rec = run_closed_loop(sc, ControllerKind::Baseline, std::nullopt, 0);
  CHECK(rec.length() == 0);
  CHECK(rec.final_state == sc.initial_state);
  std::string csv = run_to_csv(rec, sc.network);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one row
}

TEST_CASE("metrics: constant density gives that density as SSD") {
  Scenario sc = frozen_scenario();
  sc.initial_state << 6, 6;
  RunRecord rec = run_closed_loop(sc, ControllerKind::Baseline);
  Metrics m = compute_metrics(rec, sc);
  CHECK(m.ssd == doctest::Approx(6.0));
  CHECK_FALSE(m.dep.has_value());  // no emergency window
}

TEST_CASE("metrics: empty path lanes give zero DEP") {
  Scenario sc = benchmark::emergency_scenario();
  sc.steps = 20;
  RunRecord rec = run_closed_loop(sc, ControllerKind::Baseline);

  // The baseline ignores the event, so no path is recorded; override with
  // a hand-picked path of artificially emptied lanes.
  RunRecord empty_path = rec;
  for (auto& s : empty_path.steps) {
    s.state[sc.network.lane_of(13)] = 0;
    s.state[sc.network.lane_of(14)] = 0;
  }
  empty_path.final_state[sc.network.lane_of(13)] = 0;
  empty_path.final_state[sc.network.lane_of(14)] = 0;
  std::vector<int> path = {sc.network.lane_of(13), sc.network.lane_of(14)};
  Metrics m = compute_metrics(empty_path, sc, path);
  REQUIRE(m.dep.has_value());
  CHECK(*m.dep == doctest::Approx(0.0));
}

TEST_CASE("emergency runs record the window and select a path") {
  Scenario sc = benchmark::emergency_scenario();
  sc.steps = 20;
  for (ControllerKind kind :
       {ControllerKind::Centralized, ControllerKind::Decentralized}) {
    RunRecord rec = run_closed_loop(sc, kind);
    CHECK(rec.event_time == 10);
    CHECK(rec.traversal_end == 14);
    REQUIRE_FALSE(rec.selected_path.empty());
    CHECK(rec.selected_path.front() == sc.network.lane_of(8));
    CHECK(rec.selected_path.back() == sc.network.lane_of(5));
    // Steps 10..14 ran in emergency mode, nothing else.
    for (int t = 0; t < rec.length(); ++t) {
      CHECK(rec.steps[t].emergency == (t >= 10 && t <= 14));
    }
    Metrics m = compute_metrics(rec, sc);
    REQUIRE(m.dep.has_value());
    CHECK(*m.dep > 0.0);
  }
}

TEST_CASE("safety accounting over short benchmark runs") {
  Scenario sc = benchmark::emergency_scenario();
  sc.steps = 25;
  for (std::uint64_t seed : {11ull, 12ull}) {
    for (ControllerKind kind :
         {ControllerKind::Centralized, ControllerKind::Decentralized}) {
      RunRecord rec = run_closed_loop(sc, kind, seed);
      Metrics m = compute_metrics(rec, sc);
      CHECK(m.violations_normal == 0);
      CHECK(m.violations_extended == 0);
    }
  }
}

TEST_CASE("disturbance-free closed loops respect the caps") {
  Scenario sc = benchmark::normal_scenario();
  sc.network.disturbance_min.setZero();
  sc.network.disturbance_max.setZero();
  sc.steps = 40;
  for (ControllerKind kind :
       {ControllerKind::Centralized, ControllerKind::Decentralized}) {
    RunRecord rec = run_closed_loop(sc, kind);
    for (int t = 0; t <= rec.length(); ++t) {
      CHECK(rec.state_at(t).maxCoeff() <= 20);
    }
  }
}

TEST_CASE("the decentralized scheme needs declared units") {
  Scenario sc = benchmark::normal_scenario();
  sc.units.clear();
  CHECK_THROWS_AS(run_closed_loop(sc, ControllerKind::Decentralized), RunAbort);
}

TEST_CASE("sweep normalizes to its first row") {
  Scenario sc = benchmark::normal_scenario();
  sc.steps = 6;
  SweepResult sweep = sweep_horizon(sc, {1, 2}, 2, ControllerKind::Decentralized);
  REQUIRE(sweep.rows.size() == 2);
  CHECK(sweep.rows[0].ssd_norm == doctest::Approx(1.0));
  CHECK(sweep.rows[0].ct_norm == doctest::Approx(1.0));
  CHECK(sweep.rows[0].horizon == 1);
  CHECK(sweep.rows[1].horizon == 2);
}

TEST_CASE("batch pairs the schemes over common seeds") {
  Scenario sc = benchmark::normal_scenario();
  sc.steps = 10;
  BatchResult batch = run_batch(
      sc, 3, {ControllerKind::Centralized, ControllerKind::Baseline});
  REQUIRE(batch.rows.size() == 2);
  CHECK(batch.rows[1].ssd_norm == doctest::Approx(1.0));  // baseline against itself
  CHECK(batch.rows[0].mean_ssd > 0.0);
  CHECK(batch.runs == 3);
}
