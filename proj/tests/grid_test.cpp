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

#include "flowm/grid.hpp"

#include <gtest/gtest.h>

#include <random>

#include "flowm/error.hpp"
#include "test_util.hpp"

namespace flowm::grid {
namespace {

using flowm::testing::central_difference;
using flowm::testing::dot;
using flowm::testing::naive_conv;
using flowm::testing::random_field;
using flowm::testing::random_kernel;
using flowm::testing::relative_error;

TEST(Roll, IdentityAndFullPeriod) {
  std::mt19937_64 rng(1);
  const Field f = random_field(rng, 2, 5, 7);
  EXPECT_EQ(roll(f, 0, 0), f);
  EXPECT_EQ(roll(f, 7, 5), f);
  EXPECT_EQ(roll(f, -14, 10), f);
}

TEST(Roll, RowShiftsRight) {
  Field f(1, 1, 3);
  f.data = {1.0, 2.0, 3.0};
  EXPECT_EQ(roll(f, 1, 0).data, (std::vector<double>{3.0, 1.0, 2.0}));
}

TEST(Roll, ComposesAdditivelyAndPreservesSum) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> d(-20, 20);
  for (int trial = 0; trial < 50; ++trial) {
    const Field f = random_field(rng, 3, 6, 9);
    const int ax = d(rng), ay = d(rng), bx = d(rng), by = d(rng);
    EXPECT_EQ(roll(roll(f, ax, ay), bx, by), roll(f, ax + bx, ay + by));
    Field r = roll(f, ax, ay);
    std::sort(r.data.begin(), r.data.end());
    Field s = f;
    std::sort(s.data.begin(), s.data.end());
    EXPECT_EQ(r.data, s.data);
  }
}

TEST(Conv, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(3);
  const Field f = random_field(rng, 4, 6, 6);
  EXPECT_EQ(conv2d_circular(f, Kernel::delta(4)), f);
}

TEST(Conv, ConstantFieldHasNoBoundary) {
  Field f(1, 5, 5, 0.25);
  Kernel k(1, 1, 3, 3);
  std::fill(k.weights.begin(), k.weights.end(), 1.0);
  const Field out = conv2d_circular(f, k);
  for (double v : out.data) EXPECT_DOUBLE_EQ(v, 9 * 0.25);
}

TEST(Conv, MatchesNaiveReference) {
  std::mt19937_64 rng(4);
  const Field f = random_field(rng, 2, 5, 5);
  const Kernel k = random_kernel(rng, 3, 2, 3, 3);
  const Field out = conv2d_circular(f, k);
  const Field ref = naive_conv(f, k);
  ASSERT_TRUE(out.same_shape(ref));
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_NEAR(out.data[i], ref.data[i], 1e-12);
  }
}

TEST(Conv, MatchesNaiveAcrossExtentsAndBias) {
  std::mt19937_64 rng(5);
  // Widths on both sides of the vector length and the three-chunk block.
  for (int w : {1, 3, 8, 9, 16, 17, 24, 25, 31, 50}) {
    for (int kk : {1, 3, 5}) {
      if (kk > w + 2) continue;
      const Field f = random_field(rng, 3, 7, w);
      const Kernel k = random_kernel(rng, 6, 3, kk, kk, true);
      for (Padding p : {Padding::kCircular, Padding::kZero}) {
        const Field out = conv2d(f, k, p);
        const Field ref = naive_conv(f, k, p == Padding::kCircular);
        for (std::size_t i = 0; i < out.size(); ++i) {
          ASSERT_NEAR(out.data[i], ref.data[i], 1e-12) << "w=" << w << " k=" << kk;
        }
      }
    }
  }
}

TEST(Conv, CommutesWithRollBitExactly) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> d(-30, 30);
  for (int trial = 0; trial < 30; ++trial) {
    const Field f = random_field(rng, 4, 11, 19);
    const Kernel k = random_kernel(rng, 5, 4, 3, 3);
    const int dx = d(rng), dy = d(rng);
    EXPECT_EQ(conv2d_circular(roll(f, dx, dy), k), roll(conv2d_circular(f, k), dx, dy));
  }
}

TEST(Conv, ZeroPaddingBreaksEquivariance) {
  std::mt19937_64 rng(7);
  const Field f = random_field(rng, 2, 8, 8);
  const Kernel k = random_kernel(rng, 2, 2, 3, 3);
  const Field a = conv2d(roll(f, 3, 1), k, Padding::kZero);
  const Field b = roll(conv2d(f, k, Padding::kZero), 3, 1);
  EXPECT_GT(flowm::testing::max_abs_diff(a, b), 1e-6);
}

TEST(Conv, ChannelMismatchIsShapeError) {
  EXPECT_THROW(conv2d_circular(Field(2, 4, 4), Kernel(1, 3, 3, 3)), ShapeError);
}

TEST(Window, FullSizeIsIdentity) {
  std::mt19937_64 rng(8);
  const Field f = random_field(rng, 2, 6, 6);
  EXPECT_EQ(window(f, 6), f);
}

TEST(Window, CenteredCrop) {
  Field f(1, 5, 5);
  for (std::size_t i = 0; i < f.size(); ++i) f.data[i] = static_cast<double>(i);
  const Field w = window(f, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) EXPECT_EQ(w.at(0, y, x), f.at(0, y + 1, x + 1));
  }
}

TEST(Window, TooLargeIsShapeError) {
  EXPECT_THROW(window(Field(1, 4, 4), 5), ShapeError);
}

TEST(Pad, PlacesBlockAtCenter) {
  Field f(1, 2, 2);
  f.data = {1, 2, 3, 4};
  const Field p = pad(f, 4);
  ASSERT_EQ(p.height, 4);
  EXPECT_EQ(p.at(0, 1, 1), 1);
  EXPECT_EQ(p.at(0, 1, 2), 2);
  EXPECT_EQ(p.at(0, 2, 1), 3);
  EXPECT_EQ(p.at(0, 2, 2), 4);
  EXPECT_EQ(sum(p), sum(f));
  EXPECT_EQ(p.at(0, 0, 0), 0.0);
  EXPECT_EQ(p.at(0, 3, 3), 0.0);
}

TEST(Pad, IdentityAndRoundTrips) {
  std::mt19937_64 rng(9);
  const Field f = random_field(rng, 3, 6, 6);
  EXPECT_EQ(pad(f, 6), f);
  EXPECT_EQ(window(pad(f, 10), 6), f);
  const Field p = pad(f, 10);
  EXPECT_EQ(pad(window(p, 6), 10), p);
}

TEST(Pad, RejectsSmallerWorldAndOddParity) {
  EXPECT_THROW(pad(Field(1, 4, 4), 3), ShapeError);
  EXPECT_THROW(pad(Field(1, 4, 4), 7), ShapeError);
}

TEST(MaxPool, SingleSliceIsUnchanged) {
  std::mt19937_64 rng(10);
  const Field f = random_field(rng, 2, 3, 3);
  const MaxPool m = maxpool_velocity({f});
  EXPECT_EQ(m.value, f);
  for (auto a : m.argmax) EXPECT_EQ(a, 0);
}

TEST(MaxPool, MatchesElementwiseScan) {
  std::mt19937_64 rng(11);
  VelocityStack h;
  for (int v = 0; v < 3; ++v) h.push_back(random_field(rng, 2, 4, 5));
  h.push_back(random_field(rng, 2, 4, 5, 5.0, 6.0));  // dominates everywhere
  const MaxPool dom = maxpool_velocity(h);
  EXPECT_EQ(dom.value, h[3]);
  h.pop_back();
  const MaxPool m = maxpool_velocity(h);
  for (std::size_t i = 0; i < m.value.size(); ++i) {
    double best = h[0].data[i];
    int arg = 0;
    for (int v = 1; v < 3; ++v) {
      if (h[v].data[i] > best) {
        best = h[v].data[i];
        arg = v;
      }
    }
    EXPECT_EQ(m.value.data[i], best);
    EXPECT_EQ(m.argmax[i], arg);
  }
}

TEST(MaxPool, TiesGoToLowestIndex) {
  const VelocityStack h(4, Field(1, 2, 2, 1.5));
  for (auto a : maxpool_velocity(h).argmax) EXPECT_EQ(a, 0);
}

TEST(MaxPool, EmptyStackIsShapeError) {
  EXPECT_THROW(maxpool_velocity({}), ShapeError);
}

TEST(Pointwise, ReluAndSigmoid) {
  Field f(1, 1, 3);
  f.data = {0.0, 2.0, 0.5};
  EXPECT_EQ(pointwise(f, Activation::kRelu), f);
  Field n(1, 1, 2);
  n.data = {-1.0, -3.0};
  EXPECT_EQ(pointwise(n, Activation::kRelu).data, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(apply(Activation::kSigmoid, 0.0), 0.5);
  EXPECT_EQ(pointwise(n, Activation::kIdentity), n);
}

TEST(Vjp, RollIsInverseRoll) {
  std::mt19937_64 rng(12);
  const Field g = random_field(rng, 2, 4, 6);
  EXPECT_EQ(roll_vjp(g, 2, -3), roll(g, -2, 3));
}

TEST(Vjp, ReluPassesPositiveCotangent) {
  Field x(1, 1, 3, 2.0);
  Field g(1, 1, 3);
  g.data = {0.1, -0.2, 0.3};
  EXPECT_EQ(pointwise_vjp(x, g, Activation::kRelu), g);
}

TEST(Vjp, CotangentShapeMismatchIsShapeError) {
  const Field f(1, 4, 4);
  const Kernel k(2, 1, 3, 3);
  EXPECT_THROW(conv2d_vjp(f, k, Field(3, 4, 4)), ShapeError);
  EXPECT_THROW(pointwise_vjp(f, Field(1, 3, 4), Activation::kRelu), ShapeError);
  EXPECT_THROW(maxpool_vjp(Field(1, 2, 2), std::vector<std::int32_t>(3), 2),
               ShapeError);
}

// Checks every input coordinate of one random instance: analytic VJP against
// the central difference of <cot, op(x)>.
class FiniteDifference : public ::testing::Test {
 protected:
  static constexpr double kTolerance = 1e-6;
  std::mt19937_64 rng_{13};
  int checked_ = 0;

  void expect_matches(Field x, const Field& cot,
                      const std::function<Field(const Field&)>& op,
                      const Field& analytic) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0 = x.data[i];
      const double num = central_difference(
          [&](double v) {
            x.data[i] = v;
            return dot(cot, op(x));
          },
          x0);
      x.data[i] = x0;
      EXPECT_LT(relative_error(analytic.data[i], num), kTolerance) << "coordinate " << i;
      ++checked_;
    }
  }

  void TearDown() override { EXPECT_GE(checked_, 100); }
};

TEST_F(FiniteDifference, Roll) {
  for (int t = 0; t < 8; ++t) {
    const Field x = random_field(rng_, 1, 4, 4);
    const Field cot = random_field(rng_, 1, 4, 4);
    expect_matches(x, cot, [](const Field& f) { return roll(f, 1, -2); },
                   roll_vjp(cot, 1, -2));
  }
}

TEST_F(FiniteDifference, ConvInputKernelAndBias) {
  for (Padding p : {Padding::kCircular, Padding::kZero}) {
    for (int t = 0; t < 4; ++t) {
      const Field x = random_field(rng_, 1, 4, 4);
      Kernel k = random_kernel(rng_, 2, 1, 3, 3, true);
      const Field cot = random_field(rng_, 2, 4, 4);
      const ConvGrads g = conv2d_vjp(x, k, cot, p);
      expect_matches(x, cot, [&](const Field& f) { return conv2d(f, k, p); }, g.input);
      for (std::size_t i = 0; i < k.weights.size(); ++i) {
        const double w0 = k.weights[i];
        const double num = central_difference(
            [&](double v) {
              k.weights[i] = v;
              return dot(cot, conv2d(x, k, p));
            },
            w0);
        k.weights[i] = w0;
        EXPECT_LT(relative_error(g.kernel.weights[i], num), kTolerance);
        ++checked_;
      }
      for (std::size_t i = 0; i < k.bias.size(); ++i) {
        const double b0 = k.bias[i];
        const double num = central_difference(
            [&](double v) {
              k.bias[i] = v;
              return dot(cot, conv2d(x, k, p));
            },
            b0);
        k.bias[i] = b0;
        EXPECT_LT(relative_error(g.kernel.bias[i], num), kTolerance);
      }
    }
  }
}

TEST_F(FiniteDifference, Window) {
  for (int t = 0; t < 8; ++t) {
    const Field x = random_field(rng_, 1, 4, 4);
    const Field cot = random_field(rng_, 1, 2, 2);
    expect_matches(x, cot, [](const Field& f) { return window(f, 2); },
                   window_vjp(cot, 4, 4));
  }
}

TEST_F(FiniteDifference, Pad) {
  for (int t = 0; t < 8; ++t) {
    const Field x = random_field(rng_, 1, 4, 4);
    const Field cot = random_field(rng_, 1, 6, 6);
    expect_matches(x, cot, [](const Field& f) { return pad(f, 6); },
                   pad_vjp(cot, 4, 4));
  }
}

TEST_F(FiniteDifference, MaxPool) {
  for (int t = 0; t < 8; ++t) {
    VelocityStack h;
    for (int v = 0; v < 3; ++v) h.push_back(random_field(rng_, 1, 4, 4));
    const Field cot = random_field(rng_, 1, 4, 4);
    const MaxPool m = maxpool_velocity(h);
    const VelocityStack g = maxpool_vjp(cot, m.argmax, 3);
    for (int v = 0; v < 3; ++v) {
      expect_matches(h[v], cot,
                     [&](const Field& f) {
                       VelocityStack hv = h;
                       hv[v] = f;
                       return maxpool_velocity(hv).value;
                     },
                     g[v]);
    }
  }
}

TEST_F(FiniteDifference, Pointwise) {
  for (Activation fn : {Activation::kRelu, Activation::kSigmoid, Activation::kIdentity}) {
    for (int t = 0; t < 4; ++t) {
      Field x = random_field(rng_, 1, 4, 4);
      // Keep clear of the relu kink.
      for (double& v : x.data) {
        if (std::abs(v) < 1e-3) v = 0.5;
      }
      const Field cot = random_field(rng_, 1, 4, 4);
      expect_matches(x, cot, [&](const Field& f) { return pointwise(f, fn); },
                     pointwise_vjp(x, cot, fn));
    }
  }
}

}  // namespace
}  // namespace flowm::grid
