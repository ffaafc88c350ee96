#pragma once

#include <optional>

#include "ctmpc/network.hpp"

namespace ctmpc {

// min 1/2 x'Hx + g'x  s.t.  lb <= x <= ub,  C x <= h.
//
// H must be positive semidefinite and positive definite on the feasible
// subspace (every problem built by this project carries a positive
// definite inflow-deviation block). Feasibility detection relies on a
// feasible starting corner being supplied or derivable; the inflow
// problems guarantee this because their constraint rows are nonnegative,
// which makes the lower box corner the feasibility certificate.
struct QpProblem {
  Mat H;
  Vec g;
  Vec lb, ub;
  Mat C;  // may have zero rows
  Vec h;

  int dim() const { return static_cast<int>(lb.size()); }
  double objective(const Vec& x) const { return 0.5 * x.dot(H * x) + g.dot(x); }
};

enum class QpStatus { Optimal, Infeasible, IterationLimit };

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Vec x;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

// Primal active-set method. Returns a point whose KKT residual is below
// 1e-7 (typically ~1e-12); its objective is a valid lower bound for every
// feasible point of the same problem.
QpResult solve_qp_relaxation(const QpProblem& problem,
                             const std::optional<Vec>& start = std::nullopt);

}  // namespace ctmpc
