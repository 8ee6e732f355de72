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

// Integer translation flows on the torus: velocities, the displacement a
// velocity integrates to after t steps, and how those displacements act on
// fields and on velocity-indexed stacks of fields.

#ifndef FLOWM_FLOW_HPP_
#define FLOWM_FLOW_HPP_

#include <compare>
#include <optional>
#include <string>
#include <vector>

#include "flowm/grid.hpp"

namespace flowm::flow {

// Pixels per step. Ordered by (vy, vx), which is the canonical channel order.
struct Velocity {
  int vx = 0;
  int vy = 0;

  friend bool operator==(const Velocity&, const Velocity&) = default;
  friend std::strong_ordering operator<=>(const Velocity& a, const Velocity& b) {
    if (auto c = a.vy <=> b.vy; c != 0) return c;
    return a.vx <=> b.vx;
  }
  Velocity operator-() const { return {-vx, -vy}; }
  friend Velocity operator+(Velocity a, Velocity b) {
    return {a.vx + b.vx, a.vy + b.vy};
  }
  friend Velocity operator-(Velocity a, Velocity b) {
    return {a.vx - b.vx, a.vy - b.vy};
  }
};

std::string to_string(const Velocity& v);

// Distinct velocities in canonical order.
class VelocitySet {
 public:
  VelocitySet() = default;
  // Sorts; throws ConfigError on duplicates or an empty list.
  explicit VelocitySet(std::vector<Velocity> velocities);

  // All (vx, vy) with |vx|, |vy| <= radius.
  static VelocitySet square(int radius);
  static VelocitySet zero() { return square(0); }

  std::size_t size() const { return velocities_.size(); }
  const Velocity& operator[](std::size_t i) const { return velocities_[i]; }
  std::optional<std::size_t> index_of(const Velocity& v) const;
  bool contains(const Velocity& v) const { return index_of(v).has_value(); }

  auto begin() const { return velocities_.begin(); }
  auto end() const { return velocities_.end(); }

  friend bool operator==(const VelocitySet&, const VelocitySet&) = default;

 private:
  std::vector<Velocity> velocities_;
};

// A displacement on a world x world torus, stored reduced to [0, world).
class FlowElement {
 public:
  FlowElement(int dx, int dy, int world);

  static FlowElement identity(int world) { return {0, 0, world}; }

  int dx() const { return dx_; }
  int dy() const { return dy_; }
  int world() const { return world_; }

  FlowElement inverse() const { return {-dx_, -dy_, world_}; }
  bool is_identity() const { return dx_ == 0 && dy_ == 0; }

  friend bool operator==(const FlowElement&, const FlowElement&) = default;

 private:
  int dx_;
  int dy_;
  int world_;
};

// Displacement reached by integrating v for t steps. Requires t >= 0.
FlowElement flow_at(const Velocity& v, int t, int world);

// Group law; throws ConfigError when the moduli differ.
FlowElement compose(const FlowElement& a, const FlowElement& b);

// Left action: (psi . f)(g) = f(psi^-1 g). Requires a world x world field.
grid::Field act_on_field(const FlowElement& psi, const grid::Field& f);

struct StackAction {
  grid::VelocityStack stack;
  // valid[i] is false when velocities[i] - nu_hat is outside the set; such
  // channels are zero-filled and must not be compared.
  std::vector<bool> valid;
};

// Output-space representation of an input flow: channel nu of the result is
// channel nu - nu_hat of h, rolled by psi.
StackAction act_on_stack(const FlowElement& psi, const Velocity& nu_hat,
                         const VelocitySet& velocities,
                         const grid::VelocityStack& h);

// Visual flow induced by translating the agent's view by `action`: the
// displacement -action.
FlowElement action_rep(const Velocity& action, int world);

}  // namespace flowm::flow

#endif  // FLOWM_FLOW_HPP_
