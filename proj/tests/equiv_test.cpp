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

#include "flowm/equiv.hpp"

#include <gtest/gtest.h>

#include "flowm/error.hpp"

namespace flowm::equiv {
namespace {

void expect_report(const EquivReport& r) {
  EXPECT_TRUE(r.all_passed()) << r.table();
  for (const CheckResult& c : r.checks) EXPECT_GT(c.covered, 0u) << c.name;
}

TEST(FlowLaws, ExactOverSmallWorlds) {
  const EquivReport r = check_flow_laws({5, 8, 16}, flow::VelocitySet::square(2), 10);
  expect_report(r);
  for (const CheckResult& c : r.checks) EXPECT_EQ(c.max_deviation, 0.0) << c.name;
  expect_report(check_flow_laws({5}, flow::VelocitySet::square(1), 10, 3));
}

TEST(TheoremA1, HoldsAndControlFails) {
  const EquivReport r = check_theorem_a1({});
  expect_report(r);
  ASSERT_EQ(r.checks.size(), 2u);
  EXPECT_EQ(r.checks[0].max_deviation, 0.0);
  // V = {-1,0,1}^2: 49 of 81 (v, v^) pairs stay inside V, per step and trial.
  EXPECT_EQ(r.checks[0].covered, 49u * 6 * 20);
  EXPECT_EQ(r.checks[0].skipped, 32u * 6 * 20);
  EXPECT_GT(r.checks[1].max_deviation, kControlThreshold);
}

TEST(TheoremA1, RequiresFullObservability) {
  RecurrenceOptions o;
  o.window = 6;
  EXPECT_THROW(check_theorem_a1(o), ConfigError);
}

TEST(SelfMotionClosure, HoldsAndControlFails) {
  RecurrenceOptions o;
  o.window = 6;
  const EquivReport r = check_self_motion_closure(o);
  expect_report(r);
  EXPECT_EQ(r.checks[0].max_deviation, 0.0);
  EXPECT_GT(r.checks.back().max_deviation, kControlThreshold);
}

TEST(RelativeMotion, HoldsAndControlFails) {
  const EquivReport r = check_relative_motion({});
  expect_report(r);
  for (std::size_t i = 0; i + 1 < r.checks.size(); ++i) {
    EXPECT_EQ(r.checks[i].max_deviation, 0.0) << r.checks[i].name;
  }
}

TEST(RunSuite, AllAndUnknown) {
  const EquivReport r = run_suite("all", 7, 3);
  expect_report(r);
  EXPECT_EQ(r.checks.size(), 6u + 2u + 4u + 4u);
  EXPECT_NE(r.table().find("PASS"), std::string::npos);
  EXPECT_THROW(run_suite("everything", 1, 1), ConfigError);
  EXPECT_THROW(run_suite("flow", 1, 0), ConfigError);
}

TEST(Report, NegativeControlSemantics) {
  CheckResult c;
  c.max_deviation = 0.5;
  EXPECT_FALSE(c.passed());
  c.negative_control = true;
  c.tolerance = kControlThreshold;
  EXPECT_TRUE(c.passed());
  c.max_deviation = 0.0;
  EXPECT_FALSE(c.passed());
}

}  // namespace
}  // namespace flowm::equiv
