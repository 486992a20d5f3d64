// Copyright 2026 The MPPC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "support/oracle_plan.hpp"

namespace mppc::testing {
namespace {

Parkour flat(double x_max = 3.0) {
  Parkour p;
  p.x_max = x_max;
  return p;
}

const OffsetModel kPointMass = OffsetModel::point_mass();

TEST(Oracle, FlatSingleJumpMatchesClosedForm) {
  const auto o = oracle_plan(flat(), kPointMass, Limits{}, 0.0, 0.5, 1);
  ASSERT_TRUE(o.has_value());
  EXPECT_NEAR(o->total_time, std::sqrt(2.0 * 0.5 / kDefaultGravity), 1e-9);
  EXPECT_EQ(o->landings, std::vector<double>{0.5});
}

TEST(Oracle, FlatSingleJumpAgreesWithSolveAssignment) {
  const auto p = flat();
  const auto o = oracle_plan(p, kPointMass, Limits{}, 0.0, 0.5, 1);
  const JumpProblem pb{validate(p), kPointMass, Limits{}, 0.0, 0.0, 0.5};
  const auto s = solve_assignment(pb, {{0.0, 3.0, 0.0}}, std::nullopt, {});
  ASSERT_TRUE(o && s.ok());
  EXPECT_NEAR(s.plan->total_flight_time, o->total_time, 0.02 * o->total_time);
}

// Flat hop time sqrt(2R/g) is concave in R, so the fastest pair is one
// minimum-duration hop plus one long hop rather than an even split.
TEST(Oracle, TwoFlatHopsSplitUnevenly) {
  const Limits lim;
  const double g = kDefaultGravity;
  const auto o = oracle_plan(flat(), kPointMass, lim, 0.0, 1.0, 2);
  ASSERT_TRUE(o.has_value());
  const double short_hop = 0.5 * g * lim.t_min * lim.t_min;
  const double expected = lim.t_min + std::sqrt(2.0 * (1.0 - short_hop) / g);
  EXPECT_NEAR(o->total_time, expected, 2e-3);
  EXPECT_LT(o->total_time, 2.0 * std::sqrt(2.0 * 0.5 / g));
  const JumpProblem pb{validate(flat()), kPointMass, lim, 0.0, 0.0, 1.0};
  const auto planned = plan_jumps(pb, 2);
  ASSERT_TRUE(planned.ok());
  EXPECT_NEAR(planned.plan->total_flight_time, expected, 1e-4);
}

TEST(Oracle, BeyondSingleJumpReach) {
  const Limits lim;
  const double reach = lim.v_max * lim.v_max / kDefaultGravity;
  EXPECT_FALSE(oracle_plan(flat(), kPointMass, lim, 0.0, reach + 0.05, 1).has_value());
  EXPECT_TRUE(oracle_plan(flat(), kPointMass, lim, 0.0, reach - 0.05, 1).has_value());
}

TEST(Oracle, RestrictedAreaOverEveryReachableLanding) {
  Parkour p = flat();
  p.areas = {{"red", 0.05, 1.4}};
  EXPECT_FALSE(oracle_plan(p, kPointMass, Limits{}, 0.0, 1.0, 1).has_value());
  const JumpProblem pb{validate(p), kPointMass, Limits{}, 0.0, 0.0, 1.0};
  EXPECT_EQ(plan_jumps(pb, 1).status, PlanStatus::kInfeasible);
}

TEST(Oracle, TallObstacleBlocksEveryJump) {
  const Limits lim;
  Parkour p = flat();
  p.margin_v = 0.05;
  p.obstacles = {{"wall", 0.4, 0.6, lim.v_max * lim.v_max / (2 * kDefaultGravity) - 0.04}};
  EXPECT_FALSE(oracle_plan(p, kPointMass, lim, 0.0, 1.0, 2).has_value());
}

TEST(Oracle, EdgeBandsAreNotLandable) {
  Parkour p = flat();
  p.obstacles = {{"box", 1.0, 1.5, 0.1}};
  p.margin_h = 0.1;
  EXPECT_FALSE(oracle_detail::may_land(p, 0.96));
  EXPECT_TRUE(oracle_detail::may_land(p, 0.94));
  EXPECT_TRUE(oracle_detail::may_land(p, 1.06));
  EXPECT_DOUBLE_EQ(oracle_detail::ground_height(p, 1.2), 0.1);
}

TEST(Oracle, RandomCoursesStayInsideTheirBounds) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto rc = random_course(rng);
    EXPECT_GE(rc.jumps, 1);
    EXPECT_LE(rc.jumps, 3);
    EXPECT_LE(rc.parkour.obstacles.size(), 2u);
    EXPECT_LE(rc.parkour.areas.size(), 1u);
    EXPECT_NO_THROW(validate(rc.parkour));
  }
}

TEST(Oracle, PlannerMatchesOracleOnRandomCourses) {
  std::mt19937_64 rng(77);
  const auto model = OffsetModel::from_leg(LegParams{});
  int agree = 0;
  const int cases = 15;
  for (int i = 0; i < cases; ++i) {
    const auto c = compare_case(random_course(rng), model);
    if (c.agrees(0.02)) {
      ++agree;
    } else {
      EXPECT_TRUE(c.grid_boundary(0.02)) << describe(c);
    }
    EXPECT_TRUE(c.same_feasibility()) << describe(c);
    EXPECT_LE(c.relative_gap(), 0.02) << describe(c);
  }
  EXPECT_GE(agree, cases - 1);
}

}  // namespace
}  // namespace mppc::testing
