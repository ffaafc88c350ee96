#pragma once

#include "ctmpc/scenario.hpp"

namespace ctmpc {
namespace benchmark {

// The 14-lane, 4-intersection two-configuration network used throughout
// the test suites, with uniform nominal splits and a 0.6 outflow fraction
// on every green or uncontrolled lane.
NetworkSpec network();

// Normal-traffic scenario: caps 20, disturbances in [-2, 2], horizon 4.
Scenario normal_scenario();

// Same network with an emergency vehicle announced at t = 10 entering
// through lane 8 and leaving through lane 5; extended caps 25.
Scenario emergency_scenario();

}  // namespace benchmark
}  // namespace ctmpc
