#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctmpc/scenario.hpp"

namespace ctmpc {

enum class ControllerKind { Centralized, Decentralized, Baseline };

const char* to_string(ControllerKind kind);
std::optional<ControllerKind> controller_from_string(const std::string& name);

struct StepLog {
  TrafficState state;   // x(t), before the decision
  IntVec inflow;        // applied U(t)
  SignalAction action;  // applied configuration
  bool emergency = false;
  SolveStats stats;
  double wall_ms = 0.0;
};

// One closed-loop run. Everything except the wall times is a pure
// function of (scenario, controller, seed); the canonical serialization
// below omits the times and is reproduced byte-for-byte on replay.
struct RunRecord {
  std::string scenario_name;
  ControllerKind controller = ControllerKind::Baseline;
  std::uint64_t seed = 0;
  std::vector<StepLog> steps;
  TrafficState final_state;

  // Emergency accounting (absent when no event fired).
  int event_time = -1;
  int traversal_end = -1;  // last state index of the traversal window
  std::vector<int> selected_path;

  int length() const { return static_cast<int>(steps.size()); }
  const TrafficState& state_at(int t) const;
  std::string canonical(const NetworkSpec& spec) const;
};

class RunAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Simulates the scenario under the chosen controller with seeded
// disturbances. Round records of the decentralized scheme are appended to
// round_log when given.
RunRecord run_closed_loop(const Scenario& scenario, ControllerKind kind,
                          std::optional<std::uint64_t> seed_override = std::nullopt,
                          std::optional<int> steps_override = std::nullopt,
                          std::vector<RoundRecord>* round_log = nullptr);

// The periodic comparison controller: every intersection cycles through
// its configurations with a fixed dwell, gates stay at the nominal inflow.
SignalAction baseline_action(const NetworkSpec& spec, int t, int dwell);

struct Metrics {
  double ssd = 0.0;                 // lane-and-time average over the final window
  std::optional<double> dep;        // path density averaged over the traversal window
  double mean_step_ms = 0.0;
  double max_step_ms = 0.0;
  long violations_normal = 0;    // states above the normal cap outside relaxation windows
  long violations_extended = 0;  // states above the extended cap inside them
  long relax_events = 0;         // steps that needed the feasibility fallback
  double max_density = 0.0;
};

Metrics compute_metrics(const RunRecord& record, const Scenario& scenario,
                        const std::optional<std::vector<int>>& path_override = std::nullopt,
                        std::optional<int> window_override = std::nullopt);

struct BatchRow {
  ControllerKind kind = ControllerKind::Baseline;
  double mean_ssd = 0.0;
  double ssd_norm = 1.0;  // against the baseline scheme
  std::optional<double> mean_dep;
  std::optional<double> dep_norm;  // against the baseline evaluated on this scheme's paths
  double mean_step_ms = 0.0;
  double ct_norm = 1.0;  // against the centralized scheme
  long violations_normal = 0;
  long violations_extended = 0;
  long relax_events = 0;
};

struct BatchResult {
  int runs = 0;
  std::vector<BatchRow> rows;
  std::string table() const;
};

// Seeds scenario.seed + i for i = 0..runs-1; every controller sees the
// same disturbance realizations per seed.
BatchResult run_batch(const Scenario& scenario, int runs,
                      const std::vector<ControllerKind>& kinds);

struct SweepRow {
  int horizon = 0;
  double mean_ssd = 0.0;
  double ssd_norm = 1.0;  // against the first row
  double mean_step_ms = 0.0;
  double ct_norm = 1.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string table() const;
};

SweepResult sweep_horizon(const Scenario& scenario, const std::vector<int>& horizons,
                          int runs, ControllerKind kind);

// Per-step CSV: t, densities, applied inflows, configuration indices
// (1-based), mode, solve milliseconds. The final state row leaves the
// decision columns empty.
std::string run_to_csv(const RunRecord& record, const NetworkSpec& spec);

struct ParsedRun {
  std::vector<TrafficState> states;
  std::vector<IntVec> inflows;
  std::vector<SignalAction> actions;
  std::vector<bool> emergency;
};

ParsedRun parse_run_csv(const std::string& csv, const NetworkSpec& spec);

// Human-readable and machine-readable run summaries.
std::string run_summary_text(const RunRecord& record, const Metrics& metrics);
std::string run_summary_json(const RunRecord& record, const Metrics& metrics);
std::string batch_summary_json(const BatchResult& result);
std::string sweep_summary_json(const SweepResult& result);

// Line-delimited round log of the decentralized scheme, one JSON object
// per control round.
std::string round_log_jsonl(const std::vector<RoundRecord>& rounds,
                            const std::vector<UnitSpec>& units);

}  // namespace ctmpc
