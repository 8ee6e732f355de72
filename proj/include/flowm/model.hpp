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

// The simple recurrent flow-equivariant world model: a hidden state with one
// slice per velocity in V, each rolled by its own flow minus the agent action
// after every update, read out through a centered window and a max over V.

#ifndef FLOWM_MODEL_HPP_
#define FLOWM_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowm/env.hpp"
#include "flowm/flow.hpp"
#include "flowm/grid.hpp"

namespace flowm::model {

enum class Ablation { kFull, kNoVc, kNoSme, kNoSmeNoVc, kActionConcat };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

enum class RolloutInput { kZeros, kClosedLoop };

std::string to_string(RolloutInput r);
RolloutInput parse_rollout_input(const std::string& s);

struct FloWMConfig {
  int world_size = 50;
  int window_size = 32;
  int hidden_channels = 64;
  int kernel_size = 3;
  flow::VelocitySet velocities = flow::VelocitySet::square(2);
  bool use_velocity_channels = true;
  bool use_self_motion_equivariance = true;
  bool action_concat = false;
  RolloutInput rollout_input = RolloutInput::kZeros;
  // Identity is a test mode that isolates the flow from the nonlinearity.
  grid::Activation activation = grid::Activation::kRelu;
  // Action planes hold ax / action_scale and ay / action_scale.
  int action_scale = 10;

  // Applies an ablation's flags; no-VC variants force V = {(0,0)}.
  void apply_ablation(Ablation a);
  Ablation ablation() const;

  void validate() const;

  int input_channels() const { return action_concat ? 3 : 1; }
  int recurrent_in_channels() const {
    return hidden_channels + (action_concat ? 2 : 0);
  }
  // Roll applied to slice v after an update under action a.
  flow::Velocity shift(const flow::Velocity& v, const env::Action& a) const;

  friend bool operator==(const FloWMConfig&, const FloWMConfig&) = default;
};

struct Params {
  grid::Kernel U;     // input_channels -> C, no bias
  grid::Kernel W;     // recurrent_in_channels -> C, no bias
  grid::Kernel dec1;  // C -> C, bias
  grid::Kernel dec2;  // C -> 1, bias

  std::size_t count() const;
  // Fixed order U, W, dec1, dec2; used by checkpoints and the optimizer.
  std::vector<grid::Kernel*> kernels();
  std::vector<const grid::Kernel*> kernels() const;

  friend bool operator==(const Params&, const Params&) = default;
};

// Zero-valued parameters with the shapes implied by cfg.
Params zero_params(const FloWMConfig& cfg);
// Uniform in +-1/sqrt(fan_in) for weights and biases.
Params init_params(const FloWMConfig& cfg, std::uint64_t seed);

struct HiddenState {
  grid::VelocityStack stack;
  int time = 0;

  friend bool operator==(const HiddenState&, const HiddenState&) = default;
};

HiddenState init_hidden(const FloWMConfig& cfg);

// Constant planes ax / action_scale and ay / action_scale.
grid::Field action_planes(const env::Action& a, int size, int scale);

// Appends action planes to f when action_concat is on; otherwise returns f.
grid::Field encoder_input(const grid::Field& frame, const env::Action& a,
                          const FloWMConfig& cfg);

// U convolved with the (possibly concatenated) input, window-sized.
grid::Field encode(const grid::Field& input, const FloWMConfig& cfg,
                   const Params& params);

// One recurrence step. A null frame omits the input term.
HiddenState step(const HiddenState& h, const grid::Field* frame,
                 const env::Action& a, const FloWMConfig& cfg,
                 const Params& params);

grid::Field decode(const HiddenState& h, const FloWMConfig& cfg,
                   const Params& params);

// Predictions for frames obs..obs+horizon-1 after observing frames
// 0..obs-1. actions[t] is the action taken after frame t.
std::vector<grid::Field> rollout(const Params& params, const FloWMConfig& cfg,
                                 std::span<const grid::Field> observed,
                                 std::span<const env::Action> actions,
                                 int horizon);

// Encoder and update supplied as values for the abstract recurrence
// h'(v) = roll(update(h(v), encoder(f)), v). The encoder output is world-sized
// and shared across velocities.
struct AbstractOps {
  std::function<grid::Field(const grid::Field& frame)> encoder;
  std::function<grid::Field(const grid::Field& h, const grid::Field& o)> update;
};

HiddenState step_generalized(const HiddenState& h, const grid::Field* frame,
                             const AbstractOps& ops,
                             const flow::VelocitySet& velocities, int world);

// The ops for which step_generalized matches step with a zero action.
AbstractOps simple_ops(const FloWMConfig& cfg, const Params& params,
                       grid::Padding encoder_padding = grid::Padding::kCircular);

void save_checkpoint(const std::filesystem::path& path, const FloWMConfig& cfg,
                     const Params& params);

struct Checkpoint {
  FloWMConfig config;
  Params params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flowm::model

#endif  // FLOWM_MODEL_HPP_
