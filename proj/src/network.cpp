#include "ctmpc/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ctmpc {

int NetworkSpec::lane_of(int external_id) const {
  auto it = lane_index.find(external_id);
  if (it == lane_index.end()) {
    throw std::invalid_argument("unknown lane id " + std::to_string(external_id));
  }
  return it->second;
}

Mat NetworkSpec::inlet_matrix() const {
  Mat b = Mat::Zero(n_lanes(), n_inlets());
  for (int j = 0; j < n_inlets(); ++j) b(inlets[j], j) = 1.0;
  return b;
}

const PhaseEntry& NetworkSpec::phase(int lane, const SignalAction& action) const {
  int m = controlling[lane];
  if (m < 0) return uncontrolled[lane];
  int c = action.config.at(m);
  const auto& intersection = intersections[m];
  if (c < 0 || c >= static_cast<int>(intersection.configs.size())) {
    throw std::invalid_argument("configuration index " + std::to_string(c) +
                                " out of range at intersection " +
                                std::to_string(intersection.id));
  }
  return intersection.configs[c].phase[lane_slot[lane]];
}

std::vector<int> NetworkSpec::config_counts() const {
  std::vector<int> mu;
  mu.reserve(intersections.size());
  for (const auto& m : intersections) mu.push_back(static_cast<int>(m.configs.size()));
  return mu;
}

long NetworkSpec::n_actions() const {
  long n = 1;
  for (const auto& m : intersections) n *= static_cast<long>(m.configs.size());
  return n;
}

SignalAction NetworkSpec::action_from_index(long index) const {
  SignalAction a;
  a.config.assign(intersections.size(), 0);
  for (int m = n_intersections() - 1; m >= 0; --m) {
    long mu = static_cast<long>(intersections[m].configs.size());
    a.config[m] = static_cast<int>(index % mu);
    index /= mu;
  }
  return a;
}

long NetworkSpec::action_index(const SignalAction& action) const {
  long index = 0;
  for (int m = 0; m < n_intersections(); ++m) {
    index = index * static_cast<long>(intersections[m].configs.size()) + action.config[m];
  }
  return index;
}

std::vector<SignalAction> NetworkSpec::all_actions() const {
  std::vector<SignalAction> actions;
  long n = n_actions();
  actions.reserve(n);
  for (long i = 0; i < n; ++i) actions.push_back(action_from_index(i));
  return actions;
}

bool NetworkSpec::action_valid(const SignalAction& action) const {
  if (static_cast<int>(action.config.size()) != n_intersections()) return false;
  for (int m = 0; m < n_intersections(); ++m) {
    if (action.config[m] < 0 ||
        action.config[m] >= static_cast<int>(intersections[m].configs.size())) {
      return false;
    }
  }
  return true;
}

bool NetworkSpec::disturbance_in_box(const IntVec& d) const {
  if (d.size() != n_lanes()) return false;
  for (int i = 0; i < d.size(); ++i) {
    if (d[i] < disturbance_min[i] || d[i] > disturbance_max[i]) return false;
  }
  return true;
}

std::string ValidationReport::to_string() const {
  if (ok()) return "OK";
  std::ostringstream os;
  for (const auto& v : violations) os << v << "\n";
  return os.str();
}

namespace {

bool has_edge(const NetworkSpec& spec, int from, int to) {
  return std::find(spec.edges.begin(), spec.edges.end(), std::make_pair(from, to)) !=
         spec.edges.end();
}

void check_phase_entry(const NetworkSpec& spec, int lane, const std::string& where,
                       const PhaseEntry& ph, std::vector<std::string>& out) {
  const int id = spec.id_of(lane);
  if (ph.outflow_fraction < 0.0 || ph.outflow_fraction > 1.0) {
    out.push_back("lane " + std::to_string(id) + " " + where +
                  ": outflow fraction outside [0,1]");
  }
  if (!ph.green) {
    if (ph.outflow_fraction != 0.0) {
      out.push_back("lane " + std::to_string(id) + " " + where +
                    ": red light with nonzero outflow fraction");
    }
    for (const auto& [to, q] : ph.splits) {
      if (q != 0.0) {
        out.push_back("lane " + std::to_string(id) + " " + where +
                      ": red light with nonzero split toward lane " +
                      std::to_string(spec.id_of(to)));
      }
    }
    return;
  }
  double sum = 0.0;
  for (const auto& [to, q] : ph.splits) {
    if (q < 0.0 || q > 1.0) {
      out.push_back("lane " + std::to_string(id) + " " + where + ": split toward lane " +
                    std::to_string(spec.id_of(to)) + " outside [0,1]");
    }
    if (!has_edge(spec, lane, to)) {
      out.push_back("lane " + std::to_string(id) + " " + where +
                    ": split toward non-edge lane " + std::to_string(spec.id_of(to)));
    }
    sum += q;
  }
  const bool has_out = !spec.out_edges[lane].empty();
  if (has_out && std::abs(sum - 1.0) > 1e-9) {
    out.push_back("lane " + std::to_string(id) + " " + where +
                  ": split fractions sum != 1 (sum = " + std::to_string(sum) + ")");
  }
  if (!has_out && !ph.splits.empty()) {
    out.push_back("lane " + std::to_string(id) + " " + where +
                  ": splits declared but lane has no out-edges");
  }
}

}  // namespace

ValidationReport validate_network(const NetworkSpec& spec) {
  ValidationReport report;
  auto& out = report.violations;
  const int n = spec.n_lanes();

  std::set<std::pair<int, int>> edge_set(spec.edges.begin(), spec.edges.end());
  for (const auto& [i, j] : spec.edges) {
    if (i == j) {
      out.push_back("self edge at lane " + std::to_string(spec.id_of(i)));
      continue;
    }
    if (i < j && edge_set.count({j, i})) {
      out.push_back("bidirectional edge between lanes " + std::to_string(spec.id_of(i)) +
                    " and " + std::to_string(spec.id_of(j)));
    }
  }
  for (const auto& [i, j] : spec.opposite_pairs) {
    if (edge_set.count({i, j}) || edge_set.count({j, i})) {
      out.push_back("U-turn between opposite lanes " + std::to_string(spec.id_of(i)) +
                    " and " + std::to_string(spec.id_of(j)));
    }
  }

  // Lane ownership: at most one intersection, and outlets stay uncontrolled.
  std::vector<int> owners(n, -1);
  for (int m = 0; m < spec.n_intersections(); ++m) {
    const auto& intersection = spec.intersections[m];
    if (intersection.configs.empty()) {
      out.push_back("intersection " + std::to_string(intersection.id) +
                    ": empty configuration list");
    }
    for (int lane : intersection.lanes) {
      if (owners[lane] >= 0) {
        out.push_back("lane " + std::to_string(spec.id_of(lane)) +
                      " controlled by more than one intersection");
      }
      owners[lane] = m;
      if (spec.out_edges[lane].empty()) {
        out.push_back("outlet lane " + std::to_string(spec.id_of(lane)) +
                      " must be uncontrolled (intersection " +
                      std::to_string(intersection.id) + ")");
      }
    }
    for (const auto& config : intersection.configs) {
      if (config.phase.size() != intersection.lanes.size()) {
        out.push_back("intersection " + std::to_string(intersection.id) + " config '" +
                      config.label + "': phase table size mismatch");
        continue;
      }
      for (size_t s = 0; s < intersection.lanes.size(); ++s) {
        check_phase_entry(spec, intersection.lanes[s],
                          "config '" + config.label + "'", config.phase[s], out);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (owners[i] < 0) {
      check_phase_entry(spec, i, "(uncontrolled)", spec.uncontrolled[i], out);
      if (!spec.uncontrolled[i].green) {
        out.push_back("uncontrolled lane " + std::to_string(spec.id_of(i)) +
                      " marked red; uncontrolled lanes always admit outflow");
      }
    }
  }

  if (spec.disturbance_min.size() != n || spec.disturbance_max.size() != n) {
    out.push_back("disturbance box size mismatch");
  } else {
    for (int i = 0; i < n; ++i) {
      if (spec.disturbance_min[i] > 0 || spec.disturbance_max[i] < 0) {
        out.push_back("disturbance box of lane " + std::to_string(spec.id_of(i)) +
                      " does not contain 0");
      }
    }
  }

  std::set<int> seen_inlets;
  for (int lane : spec.inlets) {
    if (!seen_inlets.insert(lane).second) {
      out.push_back("duplicate inlet lane " + std::to_string(spec.id_of(lane)));
    }
  }
  return report;
}

Mat tendency_matrix(const NetworkSpec& spec, const SignalAction& action) {
  if (!spec.action_valid(action)) {
    throw std::invalid_argument("invalid signal action for this network");
  }
  const int n = spec.n_lanes();
  Mat a = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    const PhaseEntry& ph = spec.phase(j, action);
    a(j, j) = 1.0 - ph.outflow_fraction;
    for (const auto& [i, q] : ph.splits) {
      a(i, j) += q * ph.outflow_fraction;
    }
  }
  return a;
}

long long round_nonneg(double v) {
  long long r = std::llround(v);
  return r < 0 ? 0 : r;
}

TrafficState step_exact_raw(const Mat& tendency, const TrafficState& x,
                            const Vec& lane_inflow, const IntVec& disturbance) {
  Vec v = tendency * x.cast<double>() + lane_inflow;
  TrafficState next(x.size());
  for (int i = 0; i < x.size(); ++i) {
    long long r = round_nonneg(v[i]) + disturbance[i];
    next[i] = static_cast<int>(r < 0 ? 0 : r);
  }
  return next;
}

TrafficState step_exact(const NetworkSpec& spec, const TrafficState& x,
                        const SignalAction& action, const IntVec& inflow,
                        const IntVec& disturbance) {
  if (x.size() != spec.n_lanes()) throw std::invalid_argument("state size mismatch");
  if (inflow.size() != spec.n_inlets()) throw std::invalid_argument("inflow size mismatch");
  if (inflow.size() > 0 && inflow.minCoeff() < 0) {
    throw std::invalid_argument("negative inflow");
  }
  if (!spec.disturbance_in_box(disturbance)) {
    throw std::invalid_argument("disturbance outside its box");
  }
  Vec bu = Vec::Zero(spec.n_lanes());
  for (int j = 0; j < spec.n_inlets(); ++j) bu[spec.inlets[j]] += inflow[j];
  return step_exact_raw(tendency_matrix(spec, action), x, bu, disturbance);
}

IntVec sample_disturbance(const NetworkSpec& spec, Rng& rng) {
  IntVec d(spec.n_lanes());
  for (int i = 0; i < spec.n_lanes(); ++i) {
    d[i] = static_cast<int>(rng.range(spec.disturbance_min[i], spec.disturbance_max[i]));
  }
  return d;
}

}  // namespace ctmpc
