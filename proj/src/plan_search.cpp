#include "ctmpc/plan_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ctmpc/reachability.hpp"

namespace ctmpc {

namespace {

double weighted_sq(const Vec& w, const Vec& x) {
  double s = 0.0;
  for (int i = 0; i < x.size(); ++i) s += w[i] * x[i] * x[i];
  return s;
}

bool within_caps(const Vec& x, const Vec& cap, double* worst = nullptr) {
  bool ok = true;
  for (int i = 0; i < x.size(); ++i) {
    double over = x[i] - cap[i];
    if (over > 1e-9) {
      ok = false;
      if (!worst) return false;
      if (std::isfinite(cap[i])) *worst = std::max(*worst, over);
    }
  }
  return ok;
}

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

void validate(const PlanSearchProblem& p) {
  if (p.stages.empty()) throw std::invalid_argument("plan search needs a nonempty horizon");
  if (p.stage_weights.size() != p.stages.size()) {
    throw std::invalid_argument("stage weight schedule length differs from the horizon");
  }
  for (const auto& s : p.stages) {
    if (!s.actions || s.actions->actions.empty()) {
      throw std::invalid_argument("empty candidate action set");
    }
  }
}

struct Searcher {
  const PlanSearchProblem& p;
  int tf;
  bool exhaustive;
  PlanSearchStats stats;

  std::vector<Vec> x_df, x_up;
  std::vector<int> current;

  bool have_best = false;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> best;

  explicit Searcher(const PlanSearchProblem& problem, bool exhaust)
      : p(problem), tf(problem.horizon()), exhaustive(exhaust) {
    x_df.assign(tf + 1, Vec());
    x_up.assign(tf + 1, Vec());
    x_df[0] = p.x0;
    x_up[0] = p.x0_upper.size() == p.x0.size() ? p.x0_upper : p.x0;
    current.assign(tf, -1);
  }

  // Evaluates one candidate at depth d into the depth-(d+1) buffers.
  // Returns whether the band stays within this stage's caps.
  bool expand(int d, int idx) {
    ++stats.nodes;
    const auto& stage = p.stages[d];
    const Mat& a = stage.actions->tendency[idx];
    const Vec zero = Vec::Zero(p.x0.size());
    x_df[d + 1] = rounded_step(a, x_df[d], stage.lane_inflow, zero);
    x_up[d + 1] = rounded_step(a, x_up[d], stage.lane_inflow, p.d_max);
    return within_caps(x_up[d + 1], stage.cap);
  }

  double stage_cost(int d) const {
    // The state entering step d+1 is costed only while it lies inside the
    // horizon's cost window (indices 0..tf-1).
    if (d + 1 <= tf - 1) return weighted_sq(p.stage_weights[d + 1], x_df[d + 1]);
    return 0.0;
  }

  void offer(double cost) {
    if (cost < best_cost || (cost == best_cost && (!have_best || lex_less(current, best)))) {
      best_cost = cost;
      best = current;
      have_best = true;
    }
  }

  void dfs(int d, double cost, bool infeasible_prefix) {
    if (d == tf) {
      if (!infeasible_prefix) offer(cost);
      return;
    }
    const int n_cand = static_cast<int>(p.stages[d].actions->actions.size());
    for (int idx = 0; idx < n_cand; ++idx) {
      bool ok = expand(d, idx);
      current[d] = idx;
      if (!ok && !exhaustive) {
        ++stats.pruned_infeasible;
        continue;
      }
      double next_cost = cost + stage_cost(d);
      if (!exhaustive && have_best && next_cost > best_cost) {
        ++stats.pruned_bound;
        continue;
      }
      dfs(d + 1, next_cost, infeasible_prefix || !ok);
    }
    current[d] = -1;
  }
};

SignalPlan materialize(const PlanSearchProblem& p, const std::vector<int>& indices) {
  SignalPlan plan;
  plan.reserve(indices.size());
  for (size_t d = 0; d < indices.size(); ++d) {
    plan.push_back(p.stages[d].actions->actions[indices[d]]);
  }
  return plan;
}

std::optional<std::vector<int>> locate(const PlanSearchProblem& p, const SignalPlan& plan) {
  if (plan.size() != p.stages.size()) return std::nullopt;
  std::vector<int> idx(plan.size());
  for (size_t d = 0; d < plan.size(); ++d) {
    const auto& acts = p.stages[d].actions->actions;
    auto it = std::find(acts.begin(), acts.end(), plan[d]);
    if (it == acts.end()) return std::nullopt;
    idx[d] = static_cast<int>(it - acts.begin());
  }
  return idx;
}

}  // namespace

PlanSearchResult search_signal_plan(const PlanSearchProblem& problem,
                                    const std::optional<SignalPlan>& warm_start,
                                    bool exhaustive) {
  validate(problem);
  Searcher s(problem, exhaustive);

  if (warm_start && !exhaustive) {
    if (auto warm_idx = locate(problem, *warm_start)) {
      bool feasible = true;
      double cost = weighted_sq(problem.stage_weights[0], problem.x0);
      for (int d = 0; d < s.tf && feasible; ++d) {
        feasible = s.expand(d, (*warm_idx)[d]);
        cost += s.stage_cost(d);
      }
      if (feasible) {
        s.best_cost = cost;
        s.best = *warm_idx;
        s.have_best = true;
      }
      s.x_df[0] = problem.x0;
      s.x_up[0] = problem.x0_upper.size() == problem.x0.size() ? problem.x0_upper
                                                               : problem.x0;
    }
  }

  s.dfs(0, weighted_sq(problem.stage_weights[0], problem.x0), false);

  PlanSearchResult result;
  result.stats = s.stats;
  if (s.have_best) {
    result.feasible = true;
    result.cost = s.best_cost;
    result.plan_indices = s.best;
    result.plan = materialize(problem, s.best);
  }
  return result;
}

namespace {

// Relaxation mode orders plans by their per-step violation margins,
// earliest step first. Only the first step of a plan is ever applied, so
// a violation pushed later in the horizon stays hypothetical and the
// next replanning round gets a chance to resolve it.
struct RelaxedSearcher {
  const PlanSearchProblem& p;
  int tf;
  PlanSearchStats stats;
  std::vector<Vec> x_df, x_up;
  std::vector<int> current;
  std::vector<int> margins;  // per-step overshoot of the current prefix

  bool have_best = false;
  std::vector<int> best_margins;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> best;

  explicit RelaxedSearcher(const PlanSearchProblem& problem)
      : p(problem), tf(problem.horizon()) {
    x_df.assign(tf + 1, Vec());
    x_up.assign(tf + 1, Vec());
    x_df[0] = p.x0;
    x_up[0] = p.x0_upper.size() == p.x0.size() ? p.x0_upper : p.x0;
    current.assign(tf, -1);
    margins.assign(tf, 0);
  }

  // Lexicographic comparison of the prefix against the incumbent; a
  // strictly larger prefix cannot recover, margins never shrink.
  bool prefix_hopeless(int depth) const {
    if (!have_best) return false;
    for (int k = 0; k < depth; ++k) {
      if (margins[k] != best_margins[k]) return margins[k] > best_margins[k];
    }
    return false;
  }

  void offer(double cost) {
    if (have_best) {
      if (margins != best_margins) {
        if (!std::lexicographical_compare(margins.begin(), margins.end(),
                                          best_margins.begin(), best_margins.end())) {
          return;
        }
      } else if (cost > best_cost || (cost == best_cost && !lex_less(current, best))) {
        return;
      }
    }
    best_margins = margins;
    best_cost = cost;
    best = current;
    have_best = true;
  }

  void dfs(int d, double cost) {
    if (d == tf) {
      offer(cost);
      return;
    }
    const auto& stage = p.stages[d];
    const int n_cand = static_cast<int>(stage.actions->actions.size());
    const Vec zero = Vec::Zero(p.x0.size());
    for (int idx = 0; idx < n_cand; ++idx) {
      ++stats.nodes;
      const Mat& a = stage.actions->tendency[idx];
      x_df[d + 1] = rounded_step(a, x_df[d], stage.lane_inflow, zero);
      x_up[d + 1] = rounded_step(a, x_up[d], stage.lane_inflow, p.d_max);
      double worst = 0.0;
      within_caps(x_up[d + 1], stage.cap, &worst);
      margins[d] = worst > 1e-9 ? static_cast<int>(std::ceil(worst - 1e-9)) : 0;
      current[d] = idx;
      if (prefix_hopeless(d + 1)) {
        ++stats.pruned_bound;
        continue;
      }
      double next_cost =
          cost + (d + 1 <= tf - 1 ? weighted_sq(p.stage_weights[d + 1], x_df[d + 1]) : 0.0);
      dfs(d + 1, next_cost);
    }
    current[d] = -1;
    margins[d] = 0;
  }
};

}  // namespace

RelaxedPlanResult search_signal_plan_relaxed(const PlanSearchProblem& problem) {
  validate(problem);
  RelaxedSearcher s(problem);
  s.dfs(0, weighted_sq(problem.stage_weights[0], problem.x0));

  RelaxedPlanResult result;
  result.stats = s.stats;
  result.margin = s.have_best && !s.best_margins.empty()
                      ? *std::max_element(s.best_margins.begin(), s.best_margins.end())
                      : 0;
  result.step_margins = s.best_margins;
  result.cost = s.best_cost;
  result.plan_indices = s.best;
  result.plan = materialize(problem, s.best);
  return result;
}

}  // namespace ctmpc
