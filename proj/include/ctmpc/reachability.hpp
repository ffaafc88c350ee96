#pragma once

#include <vector>

#include "ctmpc/network.hpp"

namespace ctmpc {

// Disturbance-free density trajectory over a horizon; x[0] is the initial
// state. Entries of the linear model may be non-integer and negative.
struct PredictionTrace {
  std::vector<Vec> x;

  int horizon() const { return static_cast<int>(x.size()) - 1; }
};

// Elementwise lower/upper envelopes of the set-valued predictions under
// the disturbance box. Step 0 carries the initial state in both bounds.
struct IntervalBand {
  std::vector<Vec> lower, upper;

  int horizon() const { return static_cast<int>(lower.size()) - 1; }
};

struct ContainmentResult {
  bool ok = true;
  int step = -1;  // first violating step (1-based prediction index)
  int lane = -1;  // first violating lane index
};

// Linear model, disturbance-free: x(k+1) = A(k) x(k) + B U(k).
PredictionTrace predict_linear_df(const NetworkSpec& spec, const TrafficState& x0,
                                  const SignalPlan& plan,
                                  const std::vector<IntVec>& inflows);

// Linear model under the disturbance box: the bound recursions add the
// box extremes each step. Exact for this model since A is nonnegative.
IntervalBand predict_linear_band(const NetworkSpec& spec, const TrafficState& x0,
                                 const SignalPlan& plan,
                                 const std::vector<IntVec>& inflows);

// Rounded model, disturbance-free: iterates the exact dynamics with d = 0.
PredictionTrace predict_rounded_df(const NetworkSpec& spec, const TrafficState& x0,
                                   const SignalPlan& plan,
                                   const std::vector<IntVec>& inflows);

// Rounded model under the disturbance box. The per-step map is monotone,
// so propagating the box extremes encloses every realization.
IntervalBand predict_rounded_band(const NetworkSpec& spec, const TrafficState& x0,
                                  const SignalPlan& plan,
                                  const std::vector<IntVec>& inflows);

// True iff upper(k) <= caps[k-1] elementwise for k = 1..horizon; on
// failure reports the first violating (step, lane).
ContainmentResult check_containment(const IntervalBand& band,
                                    const std::vector<Vec>& caps_per_step);

// Raw single-step recursions shared with the solvers (A and lane inflow
// B*U precomputed).
Vec linear_step(const Mat& tendency, const Vec& x, const Vec& lane_inflow);
Vec rounded_step(const Mat& tendency, const Vec& x, const Vec& lane_inflow,
                 const Vec& disturbance);

}  // namespace ctmpc
