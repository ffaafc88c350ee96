#include "ctmpc/reachability.hpp"

#include <stdexcept>

namespace ctmpc {

namespace {

void check_lengths(const NetworkSpec& spec, const TrafficState& x0, const SignalPlan& plan,
                   const std::vector<IntVec>& inflows) {
  if (x0.size() != spec.n_lanes()) throw std::invalid_argument("state size mismatch");
  if (plan.size() != inflows.size()) {
    throw std::invalid_argument("plan and inflow sequence lengths differ");
  }
  for (const auto& a : plan) {
    if (!spec.action_valid(a)) throw std::invalid_argument("invalid action in plan");
  }
  for (const auto& u : inflows) {
    if (u.size() != spec.n_inlets()) throw std::invalid_argument("inflow size mismatch");
  }
}

Vec lane_inflow(const NetworkSpec& spec, const IntVec& u) {
  Vec bu = Vec::Zero(spec.n_lanes());
  for (int j = 0; j < spec.n_inlets(); ++j) bu[spec.inlets[j]] += u[j];
  return bu;
}

}  // namespace

Vec linear_step(const Mat& tendency, const Vec& x, const Vec& lane_inflow) {
  return tendency * x + lane_inflow;
}

Vec rounded_step(const Mat& tendency, const Vec& x, const Vec& lane_inflow,
                 const Vec& disturbance) {
  Vec v = tendency * x + lane_inflow;
  Vec next(x.size());
  for (int i = 0; i < x.size(); ++i) {
    double r = static_cast<double>(round_nonneg(v[i])) + disturbance[i];
    next[i] = r < 0.0 ? 0.0 : r;
  }
  return next;
}

PredictionTrace predict_linear_df(const NetworkSpec& spec, const TrafficState& x0,
                                  const SignalPlan& plan,
                                  const std::vector<IntVec>& inflows) {
  check_lengths(spec, x0, plan, inflows);
  PredictionTrace trace;
  trace.x.push_back(x0.cast<double>());
  for (size_t k = 0; k < plan.size(); ++k) {
    Mat a = tendency_matrix(spec, plan[k]);
    trace.x.push_back(linear_step(a, trace.x.back(), lane_inflow(spec, inflows[k])));
  }
  return trace;
}

IntervalBand predict_linear_band(const NetworkSpec& spec, const TrafficState& x0,
                                 const SignalPlan& plan,
                                 const std::vector<IntVec>& inflows) {
  check_lengths(spec, x0, plan, inflows);
  IntervalBand band;
  band.lower.push_back(x0.cast<double>());
  band.upper.push_back(x0.cast<double>());
  const Vec dmin = spec.disturbance_min.cast<double>();
  const Vec dmax = spec.disturbance_max.cast<double>();
  for (size_t k = 0; k < plan.size(); ++k) {
    Mat a = tendency_matrix(spec, plan[k]);
    Vec bu = lane_inflow(spec, inflows[k]);
    band.lower.push_back(linear_step(a, band.lower.back(), bu) + dmin);
    band.upper.push_back(linear_step(a, band.upper.back(), bu) + dmax);
  }
  return band;
}

PredictionTrace predict_rounded_df(const NetworkSpec& spec, const TrafficState& x0,
                                   const SignalPlan& plan,
                                   const std::vector<IntVec>& inflows) {
  check_lengths(spec, x0, plan, inflows);
  PredictionTrace trace;
  trace.x.push_back(x0.cast<double>());
  const Vec zero = Vec::Zero(spec.n_lanes());
  for (size_t k = 0; k < plan.size(); ++k) {
    Mat a = tendency_matrix(spec, plan[k]);
    trace.x.push_back(rounded_step(a, trace.x.back(), lane_inflow(spec, inflows[k]), zero));
  }
  return trace;
}

IntervalBand predict_rounded_band(const NetworkSpec& spec, const TrafficState& x0,
                                  const SignalPlan& plan,
                                  const std::vector<IntVec>& inflows) {
  check_lengths(spec, x0, plan, inflows);
  IntervalBand band;
  band.lower.push_back(x0.cast<double>());
  band.upper.push_back(x0.cast<double>());
  const Vec dmin = spec.disturbance_min.cast<double>();
  const Vec dmax = spec.disturbance_max.cast<double>();
  for (size_t k = 0; k < plan.size(); ++k) {
    Mat a = tendency_matrix(spec, plan[k]);
    Vec bu = lane_inflow(spec, inflows[k]);
    band.lower.push_back(rounded_step(a, band.lower.back(), bu, dmin));
    band.upper.push_back(rounded_step(a, band.upper.back(), bu, dmax));
  }
  return band;
}

ContainmentResult check_containment(const IntervalBand& band,
                                    const std::vector<Vec>& caps_per_step) {
  if (caps_per_step.size() != static_cast<size_t>(band.horizon())) {
    throw std::invalid_argument("cap schedule length differs from band horizon");
  }
  for (int k = 1; k <= band.horizon(); ++k) {
    const Vec& up = band.upper[k];
    const Vec& cap = caps_per_step[k - 1];
    for (int i = 0; i < up.size(); ++i) {
      if (up[i] > cap[i] + 1e-9) {
        return {false, k, i};
      }
    }
  }
  return {};
}

}  // namespace ctmpc
