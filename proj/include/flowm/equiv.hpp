// Copyright 2026 The FloWM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Exact checks of the flow algebra, flow equivariance of the recurrence,
// self-motion closure and the relative-motion identity, each run with random
// weights and paired with a negative control that must fail.

#ifndef FLOWM_EQUIV_HPP_
#define FLOWM_EQUIV_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "flowm/flow.hpp"

namespace flowm::equiv {

struct CheckResult {
  std::string name;
  double max_deviation = 0.0;
  std::size_t covered = 0;  // compared slices or cases
  std::size_t skipped = 0;  // slices outside the validity mask
  double tolerance = 1e-12;
  // Negative controls pass when the deviation exceeds the tolerance.
  bool negative_control = false;

  bool passed() const {
    return negative_control ? max_deviation > tolerance
                            : max_deviation <= tolerance;
  }
};

struct EquivReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  void append(const EquivReport& other);
  std::string table() const;
};

inline constexpr double kExactTolerance = 1e-12;
inline constexpr double kControlThreshold = 1e-6;

// Algebra laws of flow_at/compose/inverse and their action on fields.
EquivReport check_flow_laws(const std::vector<int>& worlds,
                            const flow::VelocitySet& velocities, int t_max,
                            std::uint64_t seed = 0);

struct RecurrenceOptions {
  int world = 8;
  int window = 8;
  int channels = 4;
  int radius = 1;  // V = {-radius..radius}^2
  int steps = 6;
  int trials = 20;
  std::uint64_t seed = 0;
};

// Runs the recurrence on inputs f_t and on roll(f_t, t * nu_hat) for every
// nu_hat in V and compares slice v of the second run with slice v - nu_hat of
// the first rolled by t * nu_hat. Includes the zero-padded encoder control.
EquivReport check_theorem_a1(const RecurrenceOptions& opts);

// Delta update, identity activation, one write, then zero-sum action loops:
// every intermediate state must equal the world-consistent reference, and the
// final state the pure flow. Includes the no-SME control.
EquivReport check_self_motion_closure(const RecurrenceOptions& opts);

// A moving agent over a world and a fixed agent over the counter-moving world
// see identical frames; the self-motion model's slice v on the first equals
// slice v - a on the second. Includes the no-SME control.
EquivReport check_relative_motion(const RecurrenceOptions& opts);

// Suite names: flow, theorem, closure, relative, all.
EquivReport run_suite(const std::string& suite, std::uint64_t seed, int trials);

}  // namespace flowm::equiv

#endif  // FLOWM_EQUIV_HPP_
