#include "ctmpc/qp.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ctmpc {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kStepTol = 1e-11;
constexpr double kMultTol = 1e-9;

struct Constraint {
  // a'x <= b with a either +-e_i (box) or a dense row.
  int var = -1;     // >= 0 for box constraints
  double sign = 0;  // +1 upper bound, -1 lower bound
  int row = -1;     // >= 0 for dense rows
  double b = 0;
};

double row_dot(const Constraint& c, const Mat& C, const Vec& x) {
  if (c.var >= 0) return c.sign * x[c.var];
  return C.row(c.row).dot(x);
}

void add_row(const Constraint& c, const Mat& C, Eigen::Ref<Eigen::RowVectorXd> out) {
  if (c.var >= 0) {
    out.setZero();
    out[c.var] = c.sign;
  } else {
    out = C.row(c.row);
  }
}

bool feasible_point(const QpProblem& p, const Vec& x) {
  for (int i = 0; i < p.dim(); ++i) {
    if (x[i] < p.lb[i] - kFeasTol || x[i] > p.ub[i] + kFeasTol) return false;
  }
  for (int r = 0; r < p.C.rows(); ++r) {
    if (p.C.row(r).dot(x) > p.h[r] + kFeasTol) return false;
  }
  return true;
}

// Solves the reduced problem (no fixed variables) with a primal active-set
// iteration started from a feasible point.
QpResult active_set(const QpProblem& p, const Vec& x0) {
  const int n = p.dim();
  const int m = static_cast<int>(p.C.rows());

  std::vector<Constraint> cons;
  cons.reserve(2 * n + m);
  for (int i = 0; i < n; ++i) cons.push_back({i, +1.0, -1, p.ub[i]});
  for (int i = 0; i < n; ++i) cons.push_back({i, -1.0, -1, -p.lb[i]});
  for (int r = 0; r < m; ++r) cons.push_back({-1, 0.0, r, p.h[r]});

  Vec x = x0;
  // Seed the working set with the active box bounds; at most one per
  // variable since fixed variables were eliminated by the caller.
  std::vector<int> work;
  std::vector<char> in_work(cons.size(), 0);
  auto push_work = [&](int c) {
    work.push_back(c);
    in_work[c] = 1;
  };
  for (int i = 0; i < n; ++i) {
    if (x[i] >= p.ub[i] - kFeasTol) {
      push_work(i);
    } else if (x[i] <= p.lb[i] + kFeasTol) {
      push_work(n + i);
    }
  }

  // A definite Hessian admits the Schur-complement solve of the
  // equality-constrained subproblems against one cached factorization;
  // otherwise fall back to the dense KKT system with a ridge.
  Eigen::LLT<Mat> h_llt(p.H);
  const bool h_definite = h_llt.info() == Eigen::Success;

  QpResult res;
  Vec mult;
  Mat a_work(n, n);  // active rows, transposed layout
  const int max_iter = 60 + 12 * (n + m);
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    const int w = static_cast<int>(work.size());
    Vec grad = p.H * x + p.g;

    for (int k = 0; k < w; ++k) {
      Eigen::RowVectorXd row(n);
      add_row(cons[work[k]], p.C, row);
      a_work.col(k) = row.transpose();
    }
    auto at = a_work.leftCols(w);  // n x w

    Vec step;
    bool solved = false;
    if (h_definite) {
      // H p + A'mult = -grad, A p = 0  =>  (A H^-1 A') mult = -A H^-1 grad.
      Vec y = h_llt.solve(grad);
      if (w == 0) {
        step = -y;
        mult.resize(0);
        solved = true;
      } else {
        Mat z = h_llt.solve(at);          // n x w
        Mat s = at.transpose() * z;       // w x w, definite for independent rows
        Eigen::LLT<Mat> s_llt(s);
        if (s_llt.info() == Eigen::Success) {
          mult = s_llt.solve(-(at.transpose() * y));
          step = -y - z * mult;
          solved = true;
        }
      }
    }
    if (!solved) {
      Mat kkt = Mat::Zero(n + w, n + w);
      kkt.topLeftCorner(n, n) = p.H;
      kkt.block(n, 0, w, n) = at.transpose();
      kkt.block(0, n, n, w) = at;
      Vec rhs = Vec::Zero(n + w);
      rhs.head(n) = -grad;
      Eigen::FullPivLU<Mat> lu(kkt);
      Vec sol;
      if (lu.isInvertible()) {
        sol = lu.solve(rhs);
      } else {
        Mat kkt2 = kkt;
        double ridge = 1e-10 * (1.0 + p.H.diagonal().cwiseAbs().maxCoeff());
        kkt2.topLeftCorner(n, n) += ridge * Mat::Identity(n, n);
        sol = Eigen::FullPivLU<Mat>(kkt2).solve(rhs);
      }
      step = sol.head(n);
      mult = sol.tail(w);
    }

    if (step.lpNorm<Eigen::Infinity>() <= kStepTol * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      // Stationary on the working set; check multiplier signs.
      int drop = -1;
      double most_negative = -kMultTol;
      for (int k = 0; k < w; ++k) {
        if (mult[k] < most_negative) {
          most_negative = mult[k];
          drop = k;
        }
      }
      if (drop < 0) {
        res.status = QpStatus::Optimal;
        res.x = x;
        res.objective = p.objective(x);
        Vec stat = grad;
        for (int k = 0; k < w; ++k) {
          Eigen::RowVectorXd row(n);
          add_row(cons[work[k]], p.C, row);
          stat += mult[k] * row.transpose();
        }
        double primal = 0.0;
        for (const auto& c : cons) primal = std::max(primal, row_dot(c, p.C, x) - c.b);
        res.kkt_residual = std::max(stat.lpNorm<Eigen::Infinity>(), primal);
        return res;
      }
      in_work[work[drop]] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    // Step toward the subproblem minimizer, stopping at the first blocking
    // constraint outside the working set.
    double alpha = 1.0;
    int blocking = -1;
    for (int c = 0; c < static_cast<int>(cons.size()); ++c) {
      if (in_work[c]) continue;
      double ap = row_dot(cons[c], p.C, step);
      if (ap <= 1e-12) continue;
      double slack = cons[c].b - row_dot(cons[c], p.C, x);
      double a = slack / ap;
      if (a < alpha - 1e-14) {
        alpha = std::max(a, 0.0);
        blocking = c;
      }
    }
    x += alpha * step;
    if (blocking >= 0) push_work(blocking);
  }
  res.status = QpStatus::IterationLimit;
  res.x = x;
  res.objective = p.objective(x);
  res.kkt_residual = std::numeric_limits<double>::infinity();
  return res;
}

}  // namespace

QpResult solve_qp_relaxation(const QpProblem& problem, const std::optional<Vec>& start) {
  const int n = problem.dim();
  if (problem.H.rows() != n || problem.g.size() != n || problem.ub.size() != n) {
    throw std::invalid_argument("inconsistent QP dimensions");
  }
  for (int i = 0; i < n; ++i) {
    if (problem.lb[i] > problem.ub[i] + kFeasTol) return {};  // empty box
  }

  // Substitute out variables pinned by the box; branch-and-bound produces
  // many singleton intervals.
  std::vector<int> free_vars, fixed_vars;
  for (int i = 0; i < n; ++i) {
    if (problem.ub[i] - problem.lb[i] <= kFeasTol) {
      fixed_vars.push_back(i);
    } else {
      free_vars.push_back(i);
    }
  }

  if (free_vars.empty()) {
    Vec x = problem.lb;
    if (!feasible_point(problem, x)) return {};
    QpResult res;
    res.status = QpStatus::Optimal;
    res.x = x;
    res.objective = problem.objective(x);
    res.kkt_residual = 0.0;
    return res;
  }

  QpProblem red;
  const int nr = static_cast<int>(free_vars.size());
  Vec fixed_val = Vec::Zero(n);
  for (int i : fixed_vars) fixed_val[i] = problem.lb[i];

  red.H = Mat(nr, nr);
  red.g = Vec(nr);
  red.lb = Vec(nr);
  red.ub = Vec(nr);
  for (int a = 0; a < nr; ++a) {
    red.lb[a] = problem.lb[free_vars[a]];
    red.ub[a] = problem.ub[free_vars[a]];
    for (int b = 0; b < nr; ++b) red.H(a, b) = problem.H(free_vars[a], free_vars[b]);
    red.g[a] = problem.g[free_vars[a]] + problem.H.row(free_vars[a]).dot(fixed_val);
  }

  // Keep only rows that still involve free variables; constant rows become
  // a one-shot feasibility check.
  std::vector<int> keep;
  for (int r = 0; r < problem.C.rows(); ++r) {
    double rest = problem.h[r] - problem.C.row(r).dot(fixed_val);
    bool any = false;
    for (int a = 0; a < nr; ++a) {
      if (problem.C(r, free_vars[a]) != 0.0) any = true;
    }
    if (!any) {
      if (rest < -kFeasTol) return {};
    } else {
      keep.push_back(r);
    }
  }
  red.C = Mat(static_cast<int>(keep.size()), nr);
  red.h = Vec(static_cast<int>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) {
    for (int a = 0; a < nr; ++a) red.C(static_cast<int>(k), a) = problem.C(keep[k], free_vars[a]);
    red.h[k] = problem.h[keep[k]] - problem.C.row(keep[k]).dot(fixed_val);
  }

  // Feasible start: caller's point, the origin clamped into the box, then
  // the lower corner.
  auto project = [&](Vec v) {
    for (int a = 0; a < nr; ++a) v[a] = std::clamp(v[a], red.lb[a], red.ub[a]);
    return v;
  };
  std::vector<Vec> candidates;
  if (start && start->size() == n) {
    Vec s(nr);
    for (int a = 0; a < nr; ++a) s[a] = (*start)[free_vars[a]];
    candidates.push_back(project(s));
  }
  candidates.push_back(project(Vec::Zero(nr)));
  candidates.push_back(red.lb);

  Vec x0;
  bool found = false;
  for (const auto& c : candidates) {
    if (feasible_point(red, c)) {
      x0 = c;
      found = true;
      break;
    }
  }
  if (!found) return {};

  QpResult red_res = active_set(red, x0);
  if (red_res.status != QpStatus::Optimal) return red_res;

  QpResult res = red_res;
  res.x = fixed_val;
  for (int a = 0; a < nr; ++a) res.x[free_vars[a]] = red_res.x[a];
  res.objective = problem.objective(res.x);
  return res;
}

}  // namespace ctmpc
