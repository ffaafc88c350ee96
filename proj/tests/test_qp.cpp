#include <doctest.h>

#include <Eigen/Dense>
#include <vector>

#include "ctmpc/qp.hpp"
#include "ctmpc/rng.hpp"

using namespace ctmpc;

namespace {

QpProblem scalar_problem(double lo, double hi) {
  // (u - 6)^2 up to a constant.
  QpProblem p;
  p.H = Mat::Constant(1, 1, 2.0);
  p.g = Vec::Constant(1, -12.0);
  p.lb = Vec::Constant(1, lo);
  p.ub = Vec::Constant(1, hi);
  p.C = Mat(0, 1);
  p.h = Vec(0);
  return p;
}

// Reference solver: enumerate every working set of active constraints,
// solve the equality-constrained system, and keep the best KKT point.
// Constraints are x_i <= ub_i, -x_i <= -lb_i, then rows of C.
double enumerate_active_sets(const QpProblem& p, Vec* argmin = nullptr) {
  const int n = p.dim();
  const int m = static_cast<int>(p.C.rows());
  const int total = 2 * n + m;

  auto row_of = [&](int c) -> Eigen::RowVectorXd {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
    if (c < n) {
      r[c] = 1.0;
    } else if (c < 2 * n) {
      r[c - n] = -1.0;
    } else {
      r = p.C.row(c - 2 * n);
    }
    return r;
  };
  auto bound_of = [&](int c) -> double {
    if (c < n) return p.ub[c];
    if (c < 2 * n) return -p.lb[c - n];
    return p.h[c - 2 * n];
  };
  auto feasible = [&](const Vec& x) {
    for (int c = 0; c < total; ++c) {
      if (row_of(c).dot(x) > bound_of(c) + 1e-8) return false;
    }
    return true;
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> subset;
  // Depth-first enumeration of subsets of size <= n.
  std::function<void(int)> recurse = [&](int start) {
    const int w = static_cast<int>(subset.size());
    Mat kkt = Mat::Zero(n + w, n + w);
    kkt.topLeftCorner(n, n) = p.H;
    Vec rhs(n + w);
    rhs.head(n) = -p.g;
    for (int k = 0; k < w; ++k) {
      Eigen::RowVectorXd r = row_of(subset[k]);
      kkt.block(n + k, 0, 1, n) = r;
      kkt.block(0, n + k, n, 1) = r.transpose();
      rhs[n + k] = bound_of(subset[k]);
    }
    Eigen::FullPivLU<Mat> lu(kkt);
    if (lu.isInvertible()) {
      Vec sol = lu.solve(rhs);
      Vec x = sol.head(n);
      bool mult_ok = true;
      for (int k = 0; k < w; ++k) {
        if (sol[n + k] < -1e-8) mult_ok = false;
      }
      if (mult_ok && feasible(x)) {
        double obj = p.objective(x);
        if (obj < best) {
          best = obj;
          if (argmin) *argmin = x;
        }
      }
    }
    if (w == n) return;
    for (int c = start; c < total; ++c) {
      subset.push_back(c);
      recurse(c + 1);
      subset.pop_back();
    }
  };
  recurse(0);
  return best;
}

}  // namespace

TEST_CASE("interior minimum of a scalar box problem") {
  QpResult r = solve_qp_relaxation(scalar_problem(0.0, 12.0));
  REQUIRE(r.status == QpStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(6.0));
  CHECK(r.kkt_residual <= 1e-10);
}

TEST_CASE("upper bound becomes active when it cuts the minimum") {
  QpResult r = solve_qp_relaxation(scalar_problem(0.0, 4.0));
  REQUIRE(r.status == QpStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(4.0));
  CHECK(r.kkt_residual <= 1e-8);
}

TEST_CASE("an empty or contradictory feasible set is reported") {
  QpProblem p = scalar_problem(0.0, 1.0);
  p.lb[0] = 2.0;  // empty box
  CHECK(solve_qp_relaxation(p).status == QpStatus::Infeasible);

  QpProblem q = scalar_problem(0.0, 1.0);
  q.C = Mat::Constant(1, 1, 1.0);
  q.h = Vec::Constant(1, -1.0);  // x <= -1 against x >= 0
  CHECK(solve_qp_relaxation(q).status == QpStatus::Infeasible);
}

TEST_CASE("pinned variables are substituted out") {
  QpProblem p;
  p.H = 2.0 * Mat::Identity(3, 3);
  p.g = Vec::Zero(3);
  p.g << -2.0, -8.0, -2.0;
  p.lb = Vec::Zero(3);
  p.ub = Vec::Constant(3, 10.0);
  p.lb[1] = 3.0;
  p.ub[1] = 3.0;  // x1 pinned
  p.C = Mat(0, 3);
  p.h = Vec(0);
  QpResult r = solve_qp_relaxation(p);
  REQUIRE(r.status == QpStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(1.0));
  CHECK(r.x[1] == doctest::Approx(3.0));
  CHECK(r.x[2] == doctest::Approx(1.0));
}

TEST_CASE("random box-and-row problems match the active-set enumeration") {
  Rng rng(4242);
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 6;
    Mat m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) m(i, j) = (rng.bounded(2000) / 1000.0) - 1.0;
    }
    QpProblem p;
    p.H = m.transpose() * m + 0.5 * Mat::Identity(n, n);
    p.g = Vec(n);
    for (int i = 0; i < n; ++i) p.g[i] = (rng.bounded(2000) / 100.0) - 10.0;
    p.lb = Vec::Zero(n);
    p.ub = Vec(n);
    for (int i = 0; i < n; ++i) p.ub[i] = 2.0 + rng.bounded(5);

    // Nonnegative rows through a random interior point keep the problem
    // feasible with the zero corner as a certificate.
    const int rows = 3;
    p.C = Mat(rows, n);
    p.h = Vec(rows);
    Vec interior(n);
    for (int i = 0; i < n; ++i) interior[i] = p.ub[i] * (rng.bounded(1000) / 999.0);
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < n; ++i) p.C(r, i) = rng.bounded(1000) / 999.0;
      p.h[r] = p.C.row(r).dot(interior) * (0.3 + rng.bounded(1000) / 999.0);
    }

    QpResult res = solve_qp_relaxation(p);
    REQUIRE(res.status == QpStatus::Optimal);
    CHECK(res.kkt_residual <= 1e-7);

    Vec ref_x;
    double ref = enumerate_active_sets(p, &ref_x);
    REQUIRE(std::isfinite(ref));
    CHECK(res.objective == doctest::Approx(ref).epsilon(1e-6));
    ++solved;
  }
  CHECK(solved == 40);
}
