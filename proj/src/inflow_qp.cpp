#include "ctmpc/inflow_qp.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "ctmpc/qp.hpp"

namespace ctmpc {

namespace {
constexpr double kTieTol = 1e-9;
constexpr long kNodeBudget = 500000;
}  // namespace

bool InflowQp::band_feasible(const Vec& u, double tol) const {
  if (dim() == 0) {
    for (int r = 0; r < band_const.size(); ++r) {
      if (band_const[r] > band_cap[r] + tol) return false;
    }
    return true;
  }
  Vec lhs = band_coef * u + band_const;
  for (int r = 0; r < lhs.size(); ++r) {
    if (lhs[r] > band_cap[r] + tol) return false;
  }
  return true;
}

InflowQp build_inflow_qp(const NetworkSpec& spec, const InflowQpInputs& in) {
  const int n = spec.n_lanes();
  const int tf = static_cast<int>(in.tendency.size());
  const int nd = static_cast<int>(in.decision_slots.size());
  if (static_cast<int>(in.stage_weights.size()) != tf ||
      static_cast<int>(in.caps.size()) != tf ||
      static_cast<int>(in.fixed_lane_inflow.size()) != tf ||
      static_cast<int>(in.u_nom.size()) != tf) {
    throw std::invalid_argument("inflow QP schedule lengths differ from the horizon");
  }

  InflowQp qp;
  qp.horizon = tf;
  qp.n_dec = nd;
  qp.inflow_max = in.inflow_max;
  const int dim = tf * nd;

  Mat b_dec = Mat::Zero(n, nd);
  for (int j = 0; j < nd; ++j) b_dec(spec.inlets.at(in.decision_slots[j]), j) = 1.0;

  const Vec dmax = spec.disturbance_max.cast<double>();

  // Coefficient of the predicted state on the stacked inflow, plus the
  // disturbance-free and band constants; both predictions share the
  // coefficients since the linear recursions differ only in constants.
  Mat p = Mat::Zero(n, dim);
  Vec c_df = in.x0.cast<double>();
  Vec c_band = c_df;
  if (in.x0_uncertainty.size() == n) c_band += in.x0_uncertainty;

  qp.H = Mat::Zero(dim, dim);
  qp.g = Vec::Zero(dim);
  qp.c0 = 0.0;
  qp.band_coef = Mat::Zero(tf * n, dim);
  qp.band_const = Vec(tf * n);
  qp.band_cap = Vec(tf * n);
  qp.u_nom = Vec(dim);

  // Stage 0 density term is constant.
  qp.c0 += c_df.dot(in.stage_weights[0].asDiagonal() * c_df);

  Mat theta = 0.5 * (in.theta + in.theta.transpose());
  for (int k = 0; k < tf; ++k) {
    qp.u_nom.segment(k * nd, nd) = in.u_nom[k].cast<double>();

    // Advance one step.
    p = in.tendency[k] * p;
    p.middleCols(k * nd, nd) += b_dec;
    c_df = in.tendency[k] * c_df + in.fixed_lane_inflow[k];
    c_band = in.tendency[k] * c_band + in.fixed_lane_inflow[k] + dmax;

    qp.band_coef.middleRows(k * n, n) = p;
    qp.band_const.segment(k * n, n) = c_band;
    qp.band_cap.segment(k * n, n) = in.caps[k];

    if (k + 1 <= tf - 1) {
      const Vec& w = in.stage_weights[k + 1];
      Mat wp = w.asDiagonal() * p;
      qp.H += 2.0 * p.transpose() * wp;
      qp.g += 2.0 * p.transpose() * (w.asDiagonal() * c_df);
      qp.c0 += c_df.dot(w.asDiagonal() * c_df);
    }
    if (nd > 0) {
      qp.H.block(k * nd, k * nd, nd, nd) += 2.0 * theta;
      Vec nom = in.u_nom[k].cast<double>();
      qp.g.segment(k * nd, nd) -= 2.0 * theta * nom;
      qp.c0 += nom.dot(theta * nom);
    }
  }
  qp.H = 0.5 * (qp.H + qp.H.transpose());
  return qp;
}

IntVec infeasibility_margins(const InflowQp& qp) {
  // The band rows are nonnegative in the inflow, so the zero inflow
  // minimizes every row and the constants decide feasibility exactly.
  IntVec m = IntVec::Zero(qp.band_const.size());
  for (int r = 0; r < qp.band_const.size(); ++r) {
    double cap = qp.band_cap[r];
    if (!std::isfinite(cap)) continue;
    double over = qp.band_const[r] - cap;
    if (over > 1e-9) m[r] = static_cast<int>(std::ceil(over - 1e-9));
  }
  return m;
}

InflowQp with_inflated_caps(const InflowQp& qp, const IntVec& margins) {
  InflowQp out = qp;
  for (int r = 0; r < out.band_cap.size(); ++r) {
    if (std::isfinite(out.band_cap[r])) out.band_cap[r] += margins[r];
  }
  return out;
}

namespace {

bool lex_less(const IntVec& a, const IntVec& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

struct Node {
  Vec lo, up;
  double bound;
  Vec relax;
  long seq;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.seq > b.seq;
  }
};

}  // namespace

IntQpResult solve_integer_qp(const InflowQp& qp) {
  IntQpResult best;
  const int dim = qp.dim();

  if (dim == 0) {
    best.feasible = qp.band_feasible(Vec());
    best.u = IntVec();
    best.objective = best.feasible ? qp.c0 : std::numeric_limits<double>::infinity();
    return best;
  }

  // Constraint rows with a finite cap; rows without inflow coefficients
  // stay in as pure constant checks.
  std::vector<int> rows;
  for (int r = 0; r < qp.band_coef.rows(); ++r) {
    if (std::isfinite(qp.band_cap[r])) rows.push_back(r);
  }
  QpProblem base;
  base.H = qp.H;
  base.g = qp.g;
  base.C = Mat(static_cast<int>(rows.size()), dim);
  base.h = Vec(static_cast<int>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    base.C.row(static_cast<int>(r)) = qp.band_coef.row(rows[r]);
    base.h[static_cast<int>(r)] = qp.band_cap[rows[r]] - qp.band_const[rows[r]];
  }

  auto try_candidate = [&](const IntVec& u) {
    Vec ud = u.cast<double>();
    if (!qp.band_feasible(ud)) return;
    double obj = qp.objective(ud);
    if (obj < best.objective - kTieTol ||
        (std::abs(obj - best.objective) <= kTieTol &&
         (!best.feasible || lex_less(u, best.u)))) {
      best.feasible = true;
      best.objective = obj;
      best.u = u;
    }
  };

  auto solve_node = [&](const Vec& lo, const Vec& up,
                        const std::optional<Vec>& warm) -> QpResult {
    QpProblem p = base;
    p.lb = lo;
    p.ub = up;
    QpResult r = solve_qp_relaxation(p, warm);
    if (r.status == QpStatus::IterationLimit) {
      throw std::runtime_error("QP relaxation failed to converge");
    }
    if (r.status == QpStatus::Optimal) r.objective += qp.c0;
    return r;
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long seq = 0;

  // A definite Hessian makes every relaxation minimizer unique, so a node
  // whose relaxation lands on integers is fully solved. Semidefinite
  // problems keep splitting down to singleton boxes to enumerate ties.
  Eigen::LDLT<Mat> ldlt(qp.H);
  const bool strictly_convex =
      ldlt.info() == Eigen::Success &&
      ldlt.vectorD().minCoeff() > 1e-10 * std::max(1.0, qp.H.diagonal().maxCoeff());

  Vec root_lo = Vec::Zero(dim);
  Vec root_up = Vec::Constant(dim, static_cast<double>(qp.inflow_max));
  QpResult root = solve_node(root_lo, root_up, std::nullopt);
  best.nodes = 1;
  if (root.status != QpStatus::Optimal) {
    return best;  // integer problem infeasible as well
  }

  // Flooring a feasible relaxation point stays feasible because the
  // constraint rows are nonnegative; it seeds the incumbent.
  {
    IntVec fl(dim), rd(dim);
    for (int i = 0; i < dim; ++i) {
      fl[i] = static_cast<int>(std::floor(root.x[i] + 1e-9));
      rd[i] = static_cast<int>(std::llround(root.x[i]));
      fl[i] = std::clamp(fl[i], 0, qp.inflow_max);
      rd[i] = std::clamp(rd[i], 0, qp.inflow_max);
    }
    try_candidate(rd);
    try_candidate(fl);
  }
  open.push({root_lo, root_up, root.objective, root.x, seq++});

  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (best.feasible && node.bound > best.objective + kTieTol) continue;

    // Fractional coordinate closest to 1/2; fall back to the widest side
    // when the relaxation is already integral, so ties are enumerated down
    // to singleton boxes rather than cut off early.
    int branch = -1;
    double score = -1.0;
    for (int i = 0; i < dim; ++i) {
      double f = node.relax[i] - std::floor(node.relax[i]);
      double s = std::min(f, 1.0 - f);
      if (s > 1e-9 && s > score) {
        score = s;
        branch = i;
      }
    }
    bool fractional = branch >= 0;
    if (!fractional) {
      IntVec u(dim);
      for (int i = 0; i < dim; ++i) {
        u[i] = std::clamp(static_cast<int>(std::llround(node.relax[i])),
                          static_cast<int>(node.lo[i]), static_cast<int>(node.up[i]));
      }
      try_candidate(u);
      if (strictly_convex) continue;  // unique minimizer, node solved
      double width = 0.0;
      for (int i = 0; i < dim; ++i) {
        if (node.up[i] - node.lo[i] > width) {
          width = node.up[i] - node.lo[i];
          branch = i;
        }
      }
      if (width < 0.5) continue;  // singleton box, fully evaluated
    }

    double split = fractional ? std::floor(node.relax[branch])
                              : std::floor(0.5 * (node.lo[branch] + node.up[branch]));
    split = std::clamp(split, node.lo[branch], node.up[branch] - 1.0);

    for (int side = 0; side < 2; ++side) {
      Vec lo = node.lo, up = node.up;
      if (side == 0) {
        up[branch] = split;
      } else {
        lo[branch] = split + 1.0;
      }
      QpResult r = solve_node(lo, up, node.relax);
      ++best.nodes;
      if (best.nodes > kNodeBudget) {
        throw std::runtime_error("integer QP node budget exceeded");
      }
      if (r.status != QpStatus::Optimal) continue;
      if (best.feasible && r.objective > best.objective + kTieTol) continue;
      open.push({std::move(lo), std::move(up), r.objective, r.x, seq++});
    }
  }
  return best;
}

}  // namespace ctmpc
