#pragma once

#include <limits>
#include <vector>

#include "ctmpc/network.hpp"

namespace ctmpc {

// Quadratic program over a horizon of integer gate inflows: weighted
// predicted densities of the linear model plus deviation from the nominal
// inflow schedule, constrained by per-step density caps on the band upper
// bound and by the integer box [0, inflow_max] per variable.
//
// All band rows have nonnegative coefficients, so the zero inflow
// minimizes every row; feasibility and the minimal cap-inflation margins
// are decided by the constants alone.
struct InflowQp {
  int horizon = 0;
  int n_dec = 0;  // decision inlets per step

  Mat H;           // objective 1/2 u'Hu + g'u + c0, H PSD
  Vec g;
  double c0 = 0.0;

  Mat band_coef;   // (horizon*N) x dim; row (k-1)*N+i bounds lane i at step k
  Vec band_const;  // band upper at u = 0
  Vec band_cap;    // stacked caps, +inf where unconstrained

  Vec u_nom;       // stacked nominal inflow
  int inflow_max = 0;

  int dim() const { return horizon * n_dec; }
  double objective(const Vec& u) const { return 0.5 * u.dot(H * u) + g.dot(u) + c0; }
  bool band_feasible(const Vec& u, double tol = 1e-7) const;
};

struct InflowQpInputs {
  TrafficState x0;
  Vec x0_uncertainty;                 // optional upper slack on x0 (empty = exact)
  std::vector<Mat> tendency;          // fixed light plan, one matrix per step
  std::vector<Vec> stage_weights;     // per-lane weights for steps 0..horizon-1
  Mat theta;                          // n_dec x n_dec deviation weight
  std::vector<IntVec> u_nom;          // per step, decision slots only
  std::vector<Vec> caps;              // per-lane caps for steps 1..horizon (+inf allowed)
  int inflow_max = 0;
  std::vector<Vec> fixed_lane_inflow; // per step, length N: inflow applied outside the decision
  std::vector<int> decision_slots;    // indices into spec.inlets
};

InflowQp build_inflow_qp(const NetworkSpec& spec, const InflowQpInputs& in);

struct IntQpResult {
  bool feasible = false;
  IntVec u;
  double objective = std::numeric_limits<double>::infinity();
  long nodes = 0;
};

// Exact branch-and-bound on the variable bounds: best-first by relaxation
// bound, branching on the most fractional coordinate, lexicographically
// smallest plan among objective ties.
IntQpResult solve_integer_qp(const InflowQp& qp);

// Smallest integer cap inflations, one per band row (step, lane), that
// restore feasibility; all zero when the problem is feasible as stated.
// Inflating only the violated rows keeps every other cap binding, so the
// relaxed solve cannot spend the slack elsewhere.
IntVec infeasibility_margins(const InflowQp& qp);

InflowQp with_inflated_caps(const InflowQp& qp, const IntVec& margins);

}  // namespace ctmpc
