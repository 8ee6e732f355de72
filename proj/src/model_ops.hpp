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

// Fused kernels shared by the forward model and its backward pass.

#ifndef FLOWM_SRC_MODEL_OPS_HPP_
#define FLOWM_SRC_MODEL_OPS_HPP_

#include "flowm/flow.hpp"
#include "flowm/grid.hpp"

namespace flowm::model::detail {

// out = roll(act(z + embed(enc)), shift), where embed places the window-sized
// enc at `offset` inside the world-sized z. enc may be null.
void activate_embed_roll(const grid::Field& z, const grid::Field* enc,
                         int offset, grid::Activation act,
                         const flow::Velocity& shift, grid::Field& out);

// Activation derivative expressed through the activation's output.
double activation_grad_from_output(grid::Activation act, double y);

// Channel concatenation [a; b] with matching spatial extents.
grid::Field concat_channels(const grid::Field& a, const grid::Field& b);

// Window offset of a size-`window` crop centered in a size-`world` field.
inline int window_offset(int world, int window) { return (world - window) / 2; }

}  // namespace flowm::model::detail

#endif  // FLOWM_SRC_MODEL_OPS_HPP_
