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

// Dense C x H x W signals on the discrete torus, and the handful of
// operations the recurrent world model is built from. Every forward op has a
// matching vector-Jacobian product.

#ifndef FLOWM_GRID_HPP_
#define FLOWM_GRID_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace flowm::grid {

// Real-valued signal on an H x W torus with C channels, stored row-major in
// (channel, row, column) order.
struct Field {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Field() = default;
  Field(int c, int h, int w, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height) * width;
  }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const double& at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::span<double> plane(int c) {
    return {data.data() + c * plane_size(), plane_size()};
  }
  std::span<const double> plane(int c) const {
    return {data.data() + c * plane_size(), plane_size()};
  }

  bool same_shape(const Field& other) const {
    return channels == other.channels && height == other.height &&
           width == other.width;
  }

  friend bool operator==(const Field&, const Field&) = default;
};

// One Field per velocity channel, in the canonical order of the velocity set.
using VelocityStack = std::vector<Field>;

// Centered convolution kernel, weights laid out [out][in][kh][kw]. An empty
// bias contributes nothing.
struct Kernel {
  int out_channels = 0;
  int in_channels = 0;
  int kh = 0;
  int kw = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  Kernel() = default;
  Kernel(int out, int in, int kh, int kw, bool with_bias = false);

  bool has_bias() const { return !bias.empty(); }

  double& w(int o, int i, int y, int x) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + y) *
                       kw + x];
  }
  double w(int o, int i, int y, int x) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + y) *
                       kw + x];
  }

  // Identity channel map with a single 1 at the kernel center.
  static Kernel delta(int channels, int kh = 3, int kw = 3);

  friend bool operator==(const Kernel&, const Kernel&) = default;
};

enum class Padding { kCircular, kZero };

enum class Activation { kRelu, kSigmoid, kIdentity };

// out[c, y, x] = in[c, (y - dy) mod H, (x - dx) mod W].
Field roll(const Field& f, int dx, int dy);

// Cross-correlation with a centered kernel and wrap-around borders. Each
// output pixel accumulates bias first, then kernel taps in row-major order,
// input channels innermost, so the result commutes bit-exactly with roll.
Field conv2d_circular(const Field& f, const Kernel& k);

// Same as conv2d_circular with a selectable border rule. Zero padding breaks
// translation equivariance and exists for negative controls.
Field conv2d(const Field& f, const Kernel& k, Padding padding);

// Writes into `out`, resizing it as needed.
void conv2d_into(const Field& f, const Kernel& k, Padding padding, Field& out);

// Centered size x size crop, offset ((H - size) / 2, (W - size) / 2).
Field window(const Field& f, int size);

// Embeds f at the center of a world x world zero field.
Field pad(const Field& f, int world);

struct MaxPool {
  Field value;
  // Winning velocity index per element of `value`; lowest index on ties.
  std::vector<std::int32_t> argmax;
};

MaxPool maxpool_velocity(const VelocityStack& h);

Field pointwise(const Field& f, Activation fn);

double apply(Activation fn, double x);

double sum(const Field& f);

// Reverse-mode derivatives. Each takes the forward primals and the output
// cotangent and returns input cotangents.

Field roll_vjp(const Field& cotangent, int dx, int dy);

struct ConvGrads {
  Field input;
  Kernel kernel;
};

ConvGrads conv2d_vjp(const Field& input, const Kernel& k,
                     const Field& cotangent,
                     Padding padding = Padding::kCircular);

// Accumulating variant used by the training loop: adds d<cot, conv>/dinput
// into *input_grad (skipped when null) and the kernel gradient into
// *kernel_grad (skipped when null).
void conv2d_vjp_accumulate(const Field& input, const Kernel& k,
                           const Field& cotangent, Padding padding,
                           Field* input_grad, Kernel* kernel_grad);

// Adjoint of window(): embeds the crop back into an H x W zero field.
Field window_vjp(const Field& cotangent, int height, int width);

// Adjoint of pad(): crops the centered block of the original extent.
Field pad_vjp(const Field& cotangent, int height, int width);

VelocityStack maxpool_vjp(const Field& cotangent,
                          std::span<const std::int32_t> argmax,
                          std::size_t velocities);

Field pointwise_vjp(const Field& input, const Field& cotangent, Activation fn);

// In-place helpers for the hot loops.
void add_into(Field& dst, const Field& src);
void scale_into(Field& dst, double s);

}  // namespace flowm::grid

#endif  // FLOWM_GRID_HPP_
