#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctmpc/rng.hpp"

namespace ctmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IntVec = Eigen::VectorXi;

// Per-lane densities, nonnegative integers at all times.
using TrafficState = Eigen::VectorXi;

// Outflow behavior of one lane under one signal configuration (or, for an
// uncontrolled lane, its constant behavior): whether vehicles may leave,
// which fraction leaves per period, and how that fraction splits over the
// lane's out-edges. Red lanes carry p = 0 and no splits.
struct PhaseEntry {
  bool green = false;
  double outflow_fraction = 0.0;               // p
  std::vector<std::pair<int, double>> splits;  // (destination lane index, q)
};

// One configuration of the lights at a single intersection.
struct LocalConfig {
  std::string label;
  std::vector<PhaseEntry> phase;  // aligned with Intersection::lanes
};

struct Intersection {
  int id = 0;                       // external id
  std::vector<int> lanes;           // lane indices controlled here
  std::vector<LocalConfig> configs; // the local action set
};

// One signal action across the network: a configuration index per
// intersection, in intersection order.
struct SignalAction {
  std::vector<int> config;

  bool operator==(const SignalAction&) const = default;
};

using SignalPlan = std::vector<SignalAction>;

// Immutable network topology plus the per-configuration flow-fraction
// tables. Validated once, then shared freely; all dynamics functions below
// are pure.
struct NetworkSpec {
  std::vector<int> lane_ids;                  // index -> external id
  std::unordered_map<int, int> lane_index;    // external id -> index
  std::vector<int> inlets;                    // lane indices; order fixes the inflow vector layout
  std::vector<std::pair<int, int>> edges;     // directed (from, to), lane indices
  std::vector<std::vector<int>> out_edges;    // adjacency, sorted by external id
  std::vector<std::pair<int, int>> opposite_pairs;  // two-way road pairings
  std::vector<Intersection> intersections;
  std::vector<int> controlling;     // lane -> intersection index, -1 if uncontrolled
  std::vector<int> lane_slot;       // lane -> position within its intersection's lane list
  std::vector<PhaseEntry> uncontrolled;  // constant behavior for uncontrolled lanes
  IntVec disturbance_min, disturbance_max;  // integer box containing 0

  int n_lanes() const { return static_cast<int>(lane_ids.size()); }
  int n_intersections() const { return static_cast<int>(intersections.size()); }
  int n_inlets() const { return static_cast<int>(inlets.size()); }

  int lane_of(int external_id) const;  // throws on unknown id
  int id_of(int lane) const { return lane_ids.at(lane); }

  // 0/1 inlet incidence matrix; column j selects the j-th inlet lane.
  Mat inlet_matrix() const;

  const PhaseEntry& phase(int lane, const SignalAction& action) const;

  // Enumeration of the global action set in lexicographic order of the
  // per-intersection configuration indices.
  std::vector<int> config_counts() const;
  long n_actions() const;
  SignalAction action_from_index(long index) const;
  long action_index(const SignalAction& action) const;
  std::vector<SignalAction> all_actions() const;

  bool action_valid(const SignalAction& action) const;

  bool disturbance_in_box(const IntVec& d) const;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

ValidationReport validate_network(const NetworkSpec& spec);

// The state-transition matrix induced by a signal action: diagonal
// 1 - p_i, off-diagonal (i,j) = q_{j,i} p_j. Every column sums to at
// most 1.
Mat tendency_matrix(const NetworkSpec& spec, const SignalAction& action);

// Rounds to the closest nonnegative integer; ties away from zero.
long long round_nonneg(double v);

// Exact dynamics: x' = max{ [A x + B u]_+ + d, 0 } elementwise, where
// [.]_+ rounds to the closest nonnegative integer. Throws if the
// disturbance leaves its box, the inflow is negative, or sizes mismatch.
TrafficState step_exact(const NetworkSpec& spec, const TrafficState& x,
                        const SignalAction& action, const IntVec& inflow,
                        const IntVec& disturbance);

// Same update with the tendency matrix and lane inflow B*u precomputed.
TrafficState step_exact_raw(const Mat& tendency, const TrafficState& x,
                            const Vec& lane_inflow, const IntVec& disturbance);

// One disturbance vector, each entry uniform on its box interval.
IntVec sample_disturbance(const NetworkSpec& spec, Rng& rng);

}  // namespace ctmpc
