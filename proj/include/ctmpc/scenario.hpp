#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctmpc/controller.hpp"
#include "ctmpc/decentralized.hpp"
#include "ctmpc/network.hpp"

namespace ctmpc {

// A scripted emergency: notification time, entry/exit lanes, and the
// countdowns announced with it. A pinned path overrides the vehicle's own
// choice in the decentralized scheme.
struct EmergencyEvent {
  int time = 0;
  int entry = -1;  // lane index
  int exit = -1;
  int arrival = 0;
  int traverse = 0;
  int recovery = 0;
  std::optional<std::vector<int>> forced_path;  // lane indices
};

struct Scenario {
  std::string name;
  NetworkSpec network;
  ControllerConfig controller;
  std::vector<UnitSpec> units;
  TrafficState initial_state;
  std::vector<EmergencyEvent> events;
  int steps = 60;
  std::uint64_t seed = 1;
  int baseline_dwell = 2;
  int ssd_window = 10;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses the declarative scenario format; errors name the offending field
// (or line, for syntax errors). See the README for the schema.
Scenario parse_scenario(const std::string& json_text, const std::string& origin = "scenario");
Scenario load_scenario(const std::string& path);
std::string scenario_to_json(const Scenario& scenario);

// Semantic checks beyond parsing: network invariants, weight and cap
// relations, unit partitions, event sanity. Empty means valid.
std::vector<std::string> validate_scenario(const Scenario& scenario);

// A single unit owning the whole network (used to compare the
// decentralized loop against the centralized one).
std::vector<UnitSpec> single_unit_cover(const NetworkSpec& spec);

}  // namespace ctmpc
