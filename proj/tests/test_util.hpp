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

// Shared helpers for the unit tests: random fields and kernels, a naive
// convolution oracle, and central finite differences.

#ifndef FLOWM_TESTS_TEST_UTIL_HPP_
#define FLOWM_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "flowm/grid.hpp"

namespace flowm::testing {

inline grid::Field random_field(std::mt19937_64& rng, int c, int h, int w,
                                double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  grid::Field f(c, h, w);
  for (double& v : f.data) v = u(rng);
  return f;
}

inline grid::Kernel random_kernel(std::mt19937_64& rng, int out, int in, int kh,
                                  int kw, bool bias = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  grid::Kernel k(out, in, kh, kw, bias);
  for (double& v : k.weights) v = u(rng);
  for (double& v : k.bias) v = u(rng);
  return k;
}

// Direct O(C_out C_in H W kh kw) cross-correlation with explicit modular
// indexing; shares no code with the library kernel.
inline grid::Field naive_conv(const grid::Field& f, const grid::Kernel& k,
                              bool circular = true) {
  grid::Field out(k.out_channels, f.height, f.width);
  for (int o = 0; o < k.out_channels; ++o) {
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) {
        double s = k.has_bias() ? k.bias[o] : 0.0;
        for (int i = 0; i < k.in_channels; ++i) {
          for (int ky = 0; ky < k.kh; ++ky) {
            for (int kx = 0; kx < k.kw; ++kx) {
              int sy = y + ky - k.kh / 2;
              int sx = x + kx - k.kw / 2;
              if (!circular && (sy < 0 || sy >= f.height || sx < 0 ||
                                sx >= f.width)) {
                continue;
              }
              sy = ((sy % f.height) + f.height) % f.height;
              sx = ((sx % f.width) + f.width) % f.width;
              s += k.w(o, i, ky, kx) * f.at(i, sy, sx);
            }
          }
        }
        out.at(o, y, x) = s;
      }
    }
  }
  return out;
}

inline double dot(const grid::Field& a, const grid::Field& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Central difference of a scalar function of one coordinate.
inline double central_difference(const std::function<double(double)>& f,
                                 double x, double step = 1e-6) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

inline double max_abs_diff(const grid::Field& a, const grid::Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return m;
}

}  // namespace flowm::testing

#endif  // FLOWM_TESTS_TEST_UTIL_HPP_
