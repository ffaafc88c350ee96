#include <doctest.h>

#include <functional>
#include <numeric>

#include "ctmpc/benchmark.hpp"
#include "ctmpc/inflow_qp.hpp"
#include "ctmpc/plan_search.hpp"
#include "ctmpc/reachability.hpp"
#include "ctmpc/qp.hpp"
#include "support/random_spec.hpp"

using namespace ctmpc;

namespace {

// Enumeration oracle over the full integer box, lexicographic order.
IntQpResult enumerate_integer_qp(const InflowQp& qp) {
  IntQpResult best;
  const int dim = qp.dim();
  if (dim == 0) {
    best.feasible = qp.band_feasible(Vec());
    best.objective = best.feasible ? qp.c0 : best.objective;
    best.u = IntVec();
    return best;
  }
  IntVec u = IntVec::Zero(dim);
  while (true) {
    Vec ud = u.cast<double>();
    if (qp.band_feasible(ud)) {
      double obj = qp.objective(ud);
      if (obj < best.objective - 1e-9) {
        best.feasible = true;
        best.objective = obj;
        best.u = u;
      }
    }
    int i = dim - 1;
    while (i >= 0 && u[i] == qp.inflow_max) {
      u[i] = 0;
      --i;
    }
    if (i < 0) break;
    ++u[i];
  }
  return best;
}

struct RandomInstance {
  NetworkSpec spec;
  InflowQp qp;
};

RandomInstance random_inflow_instance(Rng& rng, int tf, int u_max) {
  RandomInstance inst;
  do {
    inst.spec = testing::random_spec(rng, 2);
  } while (inst.spec.n_inlets() < 1);
  const NetworkSpec& spec = inst.spec;

  InflowQpInputs in;
  in.x0 = testing::random_state(spec, rng, 18);
  for (int k = 0; k < tf; ++k) {
    in.tendency.push_back(tendency_matrix(spec, testing::random_action(spec, rng)));
    in.stage_weights.push_back(Vec::Constant(spec.n_lanes(), 1.0));
    in.caps.push_back(Vec::Constant(spec.n_lanes(), 10.0 + rng.bounded(25)));
    in.fixed_lane_inflow.push_back(Vec::Zero(spec.n_lanes()));
    IntVec nom(spec.n_inlets());
    for (int j = 0; j < nom.size(); ++j) nom[j] = static_cast<int>(rng.bounded(u_max + 1));
    in.u_nom.push_back(nom);
  }
  in.theta = (1.0 + rng.bounded(100) / 10.0) * Mat::Identity(spec.n_inlets(), spec.n_inlets());
  in.inflow_max = u_max;
  in.decision_slots.resize(spec.n_inlets());
  std::iota(in.decision_slots.begin(), in.decision_slots.end(), 0);
  inst.qp = build_inflow_qp(spec, in);
  return inst;
}

// A plan-search problem on the benchmark network from a given state.
PlanSearchProblem benchmark_search_problem(const NetworkSpec& spec, const TrafficState& x0,
                                           int tf, double cap) {
  auto stage_actions = std::make_shared<StageActions>();
  stage_actions->actions = spec.all_actions();
  for (const auto& a : stage_actions->actions) {
    stage_actions->tendency.push_back(tendency_matrix(spec, a));
  }
  PlanSearchProblem p;
  p.x0 = x0.cast<double>();
  p.d_max = spec.disturbance_max.cast<double>();
  IntVec u(3);
  u << 6, 6, 8;
  Vec bu = Vec::Zero(spec.n_lanes());
  for (int j = 0; j < 3; ++j) bu[spec.inlets[j]] += u[j];
  for (int k = 0; k < tf; ++k) {
    PlanStage stage;
    stage.actions = stage_actions;
    stage.lane_inflow = bu;
    stage.cap = Vec::Constant(spec.n_lanes(), cap);
    p.stages.push_back(stage);
    p.stage_weights.push_back(Vec::Ones(spec.n_lanes()));
  }
  return p;
}

}  // namespace

TEST_CASE("a dominant deviation weight pins the inflow to its nominal") {
  Rng rng(11);
  RandomInstance inst = random_inflow_instance(rng, 2, 6);
  // Rebuild with a huge deviation weight and slack caps.
  InflowQpInputs in;
  const NetworkSpec& spec = inst.spec;
  in.x0 = testing::random_state(spec, rng, 10);
  IntVec nom(spec.n_inlets());
  for (int j = 0; j < nom.size(); ++j) nom[j] = 3;
  for (int k = 0; k < 2; ++k) {
    in.tendency.push_back(tendency_matrix(spec, testing::random_action(spec, rng)));
    in.stage_weights.push_back(Vec::Ones(spec.n_lanes()));
    in.caps.push_back(Vec::Constant(spec.n_lanes(),
                                    std::numeric_limits<double>::infinity()));
    in.fixed_lane_inflow.push_back(Vec::Zero(spec.n_lanes()));
    in.u_nom.push_back(nom);
  }
  in.theta = 1e9 * Mat::Identity(spec.n_inlets(), spec.n_inlets());
  in.inflow_max = 6;
  in.decision_slots.resize(spec.n_inlets());
  std::iota(in.decision_slots.begin(), in.decision_slots.end(), 0);
  InflowQp qp = build_inflow_qp(spec, in);

  IntQpResult r = solve_integer_qp(qp);
  REQUIRE(r.feasible);
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < spec.n_inlets(); ++j) {
      CHECK(r.u[k * spec.n_inlets() + j] == 3);
    }
  }
}

TEST_CASE("zero density weight and identity deviation recover the nominal exactly") {
  NetworkSpec spec = benchmark::network();
  InflowQpInputs in;
  in.x0 = TrafficState::Zero(14);
  IntVec nom(3);
  nom << 6, 6, 8;
  for (int k = 0; k < 2; ++k) {
    in.tendency.push_back(tendency_matrix(spec, spec.action_from_index(0)));
    in.stage_weights.push_back(Vec::Zero(14));
    in.caps.push_back(Vec::Constant(14, std::numeric_limits<double>::infinity()));
    in.fixed_lane_inflow.push_back(Vec::Zero(14));
    in.u_nom.push_back(nom);
  }
  in.theta = Mat::Identity(3, 3);
  in.inflow_max = 16;
  in.decision_slots = {0, 1, 2};
  InflowQp qp = build_inflow_qp(spec, in);

  IntQpResult r = solve_integer_qp(qp);
  REQUIRE(r.feasible);
  for (int k = 0; k < 2; ++k) {
    CHECK(r.u[3 * k + 0] == 6);
    CHECK(r.u[3 * k + 1] == 6);
    CHECK(r.u[3 * k + 2] == 8);
  }
  CHECK(r.objective == doctest::Approx(0.0));
}

TEST_CASE("branch-and-bound equals the integer-box enumeration") {
  Rng rng(321);
  int feasible_count = 0, infeasible_count = 0;
  for (int trial = 0; trial < 60; ++trial) {
    RandomInstance inst = random_inflow_instance(rng, 2, 4);
    if (inst.qp.dim() > 4) continue;  // keep the oracle box small
    IntQpResult bb = solve_integer_qp(inst.qp);
    IntQpResult oracle = enumerate_integer_qp(inst.qp);
    REQUIRE(bb.feasible == oracle.feasible);
    if (bb.feasible) {
      ++feasible_count;
      CHECK(bb.objective == doctest::Approx(oracle.objective).epsilon(1e-9));
      CHECK(bb.u == oracle.u);
    } else {
      ++infeasible_count;
    }
  }
  // The mix should exercise both outcomes.
  CHECK(feasible_count >= 20);
  CHECK(infeasible_count >= 1);
}

TEST_CASE("root relaxation bounds the integer optimum from below") {
  Rng rng(777);
  for (int trial = 0; trial < 20; ++trial) {
    RandomInstance inst = random_inflow_instance(rng, 2, 4);
    const InflowQp& qp = inst.qp;
    if (qp.dim() == 0) continue;
    QpProblem p;
    p.H = qp.H;
    p.g = qp.g;
    p.lb = Vec::Zero(qp.dim());
    p.ub = Vec::Constant(qp.dim(), static_cast<double>(qp.inflow_max));
    std::vector<int> rows;
    for (int r = 0; r < qp.band_coef.rows(); ++r) {
      if (std::isfinite(qp.band_cap[r])) rows.push_back(r);
    }
    p.C = Mat(static_cast<int>(rows.size()), qp.dim());
    p.h = Vec(static_cast<int>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      p.C.row(static_cast<int>(r)) = qp.band_coef.row(rows[r]);
      p.h[static_cast<int>(r)] = qp.band_cap[rows[r]] - qp.band_const[rows[r]];
    }
    QpResult relax = solve_qp_relaxation(p);
    IntQpResult exact = solve_integer_qp(qp);
    if (relax.status != QpStatus::Optimal) {
      CHECK_FALSE(exact.feasible);
      continue;
    }
    if (exact.feasible) {
      CHECK(relax.objective + qp.c0 <= exact.objective + 1e-9);
    }
  }
}

TEST_CASE("cap inflation margins restore feasibility") {
  NetworkSpec spec = benchmark::network();
  InflowQpInputs in;
  in.x0 = TrafficState::Constant(14, 19);
  IntVec nom(3);
  nom << 6, 6, 8;
  for (int k = 0; k < 2; ++k) {
    in.tendency.push_back(tendency_matrix(spec, spec.action_from_index(0)));
    in.stage_weights.push_back(Vec::Ones(14));
    in.caps.push_back(Vec::Constant(14, 10.0));  // far below the initial densities
    in.fixed_lane_inflow.push_back(Vec::Zero(14));
    in.u_nom.push_back(nom);
  }
  in.theta = 50.0 * Mat::Identity(3, 3);
  in.inflow_max = 16;
  in.decision_slots = {0, 1, 2};
  InflowQp qp = build_inflow_qp(spec, in);

  CHECK_FALSE(solve_integer_qp(qp).feasible);
  IntVec margins = infeasibility_margins(qp);
  REQUIRE(margins.size() == 2 * 14);
  CHECK(margins.maxCoeff() > 0);
  IntQpResult relaxed = solve_integer_qp(with_inflated_caps(qp, margins));
  CHECK(relaxed.feasible);

  // One less anywhere stays infeasible: the margins are minimal per row.
  IntVec less = margins;
  for (int r = 0; r < less.size(); ++r) less[r] = std::max(0, less[r] - 1);
  CHECK_FALSE(solve_integer_qp(with_inflated_caps(qp, less)).feasible);
}

TEST_CASE("plan search tie-breaks lexicographically") {
  NetworkSpec spec = benchmark::network();
  TrafficState x0 = TrafficState::Zero(14);
  PlanSearchProblem p = benchmark_search_problem(spec, x0, 1, 1e9);
  p.stage_weights.assign(1, Vec::Zero(14));  // every plan ties
  PlanSearchResult r = search_signal_plan(p, std::nullopt);
  REQUIRE(r.feasible);
  CHECK(r.plan_indices == std::vector<int>{0});
}

TEST_CASE("plan search picks the strictly cheaper first action") {
  // Two lanes, one intersection, two configurations: draining lane 1 is
  // strictly cheaper than leaving it full when lane 1 starts congested.
  NetworkSpec spec;
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
  LocalConfig red{"red", {PhaseEntry{}}};
  LocalConfig green{"green", {PhaseEntry{true, 0.5, {{1, 1.0}}}}};
  m.configs = {red, green};
  spec.intersections = {m};
  spec.uncontrolled.assign(2, PhaseEntry{});
  spec.uncontrolled[1] = PhaseEntry{true, 1.0, {}};

  auto acts = std::make_shared<StageActions>();
  acts->actions = spec.all_actions();
  for (const auto& a : acts->actions) acts->tendency.push_back(tendency_matrix(spec, a));

  PlanSearchProblem p;
  TrafficState x0(2);
  x0 << 10, 0;
  p.x0 = x0.cast<double>();
  p.d_max = Vec::Zero(2);
  for (int k = 0; k < 2; ++k) {
    PlanStage stage;
    stage.actions = acts;
    stage.lane_inflow = Vec::Zero(2);
    stage.cap = Vec::Constant(2, 1e9);
    p.stages.push_back(stage);
    p.stage_weights.push_back(Vec::Ones(2));
  }
  PlanSearchResult r = search_signal_plan(p, std::nullopt);
  REQUIRE(r.feasible);
  // Costs: stage 0 is common; green first gives x(1) = (5,5) -> 50,
  // red first gives x(1) = (10,0) -> 100.
  CHECK(r.plan_indices[0] == 1);
}

TEST_CASE("infeasible prefixes prune their whole subtree") {
  NetworkSpec spec = benchmark::network();
  TrafficState x0 = TrafficState::Constant(14, 18);
  PlanSearchProblem p = benchmark_search_problem(spec, x0, 3, 20.0);

  PlanSearchResult pruned = search_signal_plan(p, std::nullopt);
  PlanSearchResult exhaustive = search_signal_plan(p, std::nullopt, true);

  long full_tree = 16 + 16 * 16 + 16 * 16 * 16;
  CHECK(exhaustive.stats.nodes == full_tree);
  if (pruned.stats.pruned_infeasible > 0) {
    CHECK(pruned.stats.nodes < full_tree);
  }
  CHECK(pruned.feasible == exhaustive.feasible);
  if (pruned.feasible) {
    CHECK(pruned.cost == doctest::Approx(exhaustive.cost));
    CHECK(pruned.plan_indices == exhaustive.plan_indices);
  }
}

TEST_CASE("pruned search equals exhaustive search on random benchmark states") {
  NetworkSpec spec = benchmark::network();
  Rng rng(909);
  for (int trial = 0; trial < 8; ++trial) {
    TrafficState x0 = testing::random_state(spec, rng, 22);
    PlanSearchProblem p = benchmark_search_problem(spec, x0, 3, 20.0);
    PlanSearchResult a = search_signal_plan(p, std::nullopt);
    PlanSearchResult b = search_signal_plan(p, std::nullopt, true);
    REQUIRE(a.feasible == b.feasible);
    if (a.feasible) {
      CHECK(a.cost == doctest::Approx(b.cost));
      CHECK(a.plan_indices == b.plan_indices);
    }
  }
}

TEST_CASE("warm starts do not change the search result") {
  NetworkSpec spec = benchmark::network();
  Rng rng(4321);
  for (int trial = 0; trial < 10; ++trial) {
    TrafficState x0 = testing::random_state(spec, rng, 20);
    PlanSearchProblem p = benchmark_search_problem(spec, x0, 3, 25.0);
    SignalPlan warm;
    for (int k = 0; k < 3; ++k) warm.push_back(testing::random_action(spec, rng));
    PlanSearchResult with_warm = search_signal_plan(p, warm);
    PlanSearchResult without = search_signal_plan(p, std::nullopt);
    CHECK(with_warm.feasible == without.feasible);
    if (with_warm.feasible) {
      CHECK(with_warm.cost == doctest::Approx(without.cost));
      CHECK(with_warm.plan_indices == without.plan_indices);
    }
  }
}

TEST_CASE("relaxed search finds the minimal cap inflation") {
  NetworkSpec spec = benchmark::network();
  // Congested enough that no plan fits the caps.
  TrafficState x0 = TrafficState::Constant(14, 20);
  PlanSearchProblem p = benchmark_search_problem(spec, x0, 2, 15.0);
  PlanSearchResult strict = search_signal_plan(p, std::nullopt);
  REQUIRE_FALSE(strict.feasible);

  RelaxedPlanResult relaxed = search_signal_plan_relaxed(p);
  CHECK(relaxed.margin > 0);
  REQUIRE(relaxed.plan.size() == 2);
  REQUIRE(relaxed.step_margins.size() == 2);

  // Oracle: exhaustive per-step margin vectors over all 256 plans,
  // ordered lexicographically (earliest step first).
  std::vector<int> best_margins;
  for (long a0 = 0; a0 < 16; ++a0) {
    for (long a1 = 0; a1 < 16; ++a1) {
      Vec up = p.x0;
      std::vector<int> margins(2, 0);
      SignalPlan plan{spec.action_from_index(a0), spec.action_from_index(a1)};
      for (int k = 0; k < 2; ++k) {
        up = rounded_step(tendency_matrix(spec, plan[k]), up, p.stages[k].lane_inflow,
                          p.d_max);
        double worst = (up - p.stages[k].cap).maxCoeff();
        if (worst > 1e-9) margins[k] = static_cast<int>(std::ceil(worst - 1e-9));
      }
      if (best_margins.empty() ||
          std::lexicographical_compare(margins.begin(), margins.end(),
                                       best_margins.begin(), best_margins.end())) {
        best_margins = margins;
      }
    }
  }
  CHECK(relaxed.step_margins == best_margins);
}
