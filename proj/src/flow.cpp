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

#include "flowm/flow.hpp"

#include <algorithm>

#include "flowm/error.hpp"

namespace flowm::flow {
namespace {

int reduce(long long v, int m) {
  long long r = v % m;
  return static_cast<int>(r < 0 ? r + m : r);
}

}  // namespace

std::string to_string(const Velocity& v) {
  return "(" + std::to_string(v.vx) + "," + std::to_string(v.vy) + ")";
}

VelocitySet::VelocitySet(std::vector<Velocity> velocities)
    : velocities_(std::move(velocities)) {
  if (velocities_.empty()) throw ConfigError("velocity set must not be empty");
  std::sort(velocities_.begin(), velocities_.end());
  if (std::adjacent_find(velocities_.begin(), velocities_.end()) !=
      velocities_.end()) {
    throw ConfigError("velocity set contains duplicates");
  }
}

VelocitySet VelocitySet::square(int radius) {
  if (radius < 0) throw ConfigError("velocity radius must be >= 0");
  std::vector<Velocity> v;
  for (int vy = -radius; vy <= radius; ++vy) {
    for (int vx = -radius; vx <= radius; ++vx) v.push_back({vx, vy});
  }
  return VelocitySet(std::move(v));
}

std::optional<std::size_t> VelocitySet::index_of(const Velocity& v) const {
  auto it = std::lower_bound(velocities_.begin(), velocities_.end(), v);
  if (it == velocities_.end() || *it != v) return std::nullopt;
  return static_cast<std::size_t>(it - velocities_.begin());
}

FlowElement::FlowElement(int dx, int dy, int world) : world_(world) {
  if (world <= 0) throw ConfigError("flow modulus must be positive");
  dx_ = reduce(dx, world);
  dy_ = reduce(dy, world);
}

FlowElement flow_at(const Velocity& v, int t, int world) {
  if (t < 0) throw ConfigError("flow_at: t must be >= 0");
  return FlowElement(reduce(static_cast<long long>(t) * v.vx, world),
                     reduce(static_cast<long long>(t) * v.vy, world), world);
}

FlowElement compose(const FlowElement& a, const FlowElement& b) {
  if (a.world() != b.world()) {
    throw ConfigError("compose: flows live on different tori (" +
                      std::to_string(a.world()) + " vs " +
                      std::to_string(b.world()) + ")");
  }
  return FlowElement(a.dx() + b.dx(), a.dy() + b.dy(), a.world());
}

grid::Field act_on_field(const FlowElement& psi, const grid::Field& f) {
  if (f.height != psi.world() || f.width != psi.world()) {
    throw ShapeError("act_on_field: field is " + std::to_string(f.height) +
                     "x" + std::to_string(f.width) + ", flow acts on a " +
                     std::to_string(psi.world()) + "-torus");
  }
  return grid::roll(f, psi.dx(), psi.dy());
}

StackAction act_on_stack(const FlowElement& psi, const Velocity& nu_hat,
                         const VelocitySet& velocities,
                         const grid::VelocityStack& h) {
  if (h.size() != velocities.size()) {
    throw ShapeError("act_on_stack: stack has " + std::to_string(h.size()) +
                     " channels, velocity set has " +
                     std::to_string(velocities.size()));
  }
  StackAction out;
  out.stack.reserve(h.size());
  out.valid.reserve(h.size());
  for (std::size_t i = 0; i < velocities.size(); ++i) {
    const auto src = velocities.index_of(velocities[i] - nu_hat);
    if (src) {
      out.stack.push_back(act_on_field(psi, h[*src]));
      out.valid.push_back(true);
    } else {
      out.stack.emplace_back(h[i].channels, h[i].height, h[i].width);
      out.valid.push_back(false);
    }
  }
  return out;
}

FlowElement action_rep(const Velocity& action, int world) {
  return FlowElement(-action.vx, -action.vy, world);
}

}  // namespace flowm::flow
