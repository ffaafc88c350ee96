#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "ctmpc/network.hpp"

namespace ctmpc {

// Candidate signal actions for one step, with their tendency matrices
// assembled up front. Steps that share an action set share one instance.
struct StageActions {
  std::vector<SignalAction> actions;
  std::vector<Mat> tendency;
};

struct PlanStage {
  std::shared_ptr<const StageActions> actions;
  Vec lane_inflow;  // B*U of this step, fixed during the search
  Vec cap;          // per-lane cap on the band upper bound after this step (+inf allowed)
};

// Finite-horizon search over signal plans: stage costs are weighted
// squared densities of the rounded disturbance-free prediction, and a
// plan is feasible when the rounded band upper bound respects every cap.
struct PlanSearchProblem {
  Vec x0;
  Vec x0_upper;  // band start; equals x0 unless the state is an estimate
  std::vector<PlanStage> stages;
  std::vector<Vec> stage_weights;  // weight on the state at steps 0..horizon-1
  Vec d_max;

  int horizon() const { return static_cast<int>(stages.size()); }
};

struct PlanSearchStats {
  long nodes = 0;              // stage evaluations performed
  long pruned_infeasible = 0;  // subtrees skipped after a cap violation
  long pruned_bound = 0;       // subtrees skipped by the incumbent bound
};

struct PlanSearchResult {
  bool feasible = false;
  SignalPlan plan;
  std::vector<int> plan_indices;  // candidate index per step
  double cost = std::numeric_limits<double>::infinity();
  PlanSearchStats stats;
};

// Depth-first in action-index order. A prefix that violates a cap prunes
// its whole subtree, and partial costs bound the incumbent from below.
// The exhaustive mode disables both prunings and serves as the oracle;
// both modes return the same cost-minimizing plan, ties broken by the
// lexicographically smallest index sequence. A feasible warm-start plan
// only seeds the incumbent value.
PlanSearchResult search_signal_plan(const PlanSearchProblem& problem,
                                    const std::optional<SignalPlan>& warm_start,
                                    bool exhaustive = false);

// Fallback used when no plan satisfies the caps: orders candidate plans
// by their per-step violation margins (earliest step first, so that the
// applied first action carries the least realized violation), then cost,
// then lexicographic order.
struct RelaxedPlanResult {
  SignalPlan plan;
  std::vector<int> plan_indices;
  double cost = std::numeric_limits<double>::infinity();
  int margin = 0;                 // worst overshoot of the chosen plan
  std::vector<int> step_margins;  // per-step overshoots, the ordering key
  PlanSearchStats stats;
};

RelaxedPlanResult search_signal_plan_relaxed(const PlanSearchProblem& problem);

}  // namespace ctmpc
