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

#include <random>

#include "mppc/miopt_planner.hpp"
#include "support/oracle_plan.hpp"

namespace mppc {
namespace {

constexpr double g = kDefaultGravity;

Parkour flat(double x_max = 3.0) {
  Parkour p;
  p.x_max = x_max;
  return p;
}

JumpProblem problem(const Parkour& p, double x_t, const OffsetModel& model = OffsetModel::point_mass()) {
  const auto env = validate(p);
  return {env, model, Limits{}, 0.0, 0.0, x_t};
}

// Point-mass jump from `from` landing at `to` with angle `theta`.
DecisionVars aimed(const Vec2& from, const Vec2& to, double theta) {
  const double dx = to.x() - from.x(), dz = to.y() - from.y();
  const double t = std::sqrt(2.0 * (dx * std::tan(theta) - dz) / g);
  return {{t}, {dx / (t * std::cos(theta))}, {theta}};
}

void expect_plan_invariants(const JumpProblem& pb, const Plan& plan, double tol = 1e-6) {
  double sum = 0.0;
  double prev_x = pb.x_s;
  auto da_prev = start_binaries(pb.env, pb.x_s, false)[0];
  auto db_prev = start_binaries(pb.env, pb.x_s, true)[0];
  for (std::size_t n = 0; n < plan.jumps.size(); ++n) {
    const auto& j = plan.jumps[n];
    sum += j.t;
    EXPECT_GE(j.landing.x(), prev_x - tol);
    prev_x = j.landing.x();
    EXPECT_NEAR(j.landing.y(), locate(pb.env, j.landing.x()), tol);
    EXPECT_TRUE(landing_permitted(pb.env, j.landing.x(), tol));
    EXPECT_LE(j.v * std::sin(j.theta) - pb.model.gravity() * j.t, tol);
    for (std::size_t k = 0; k < pb.env.obstacles().size(); ++k) {
      const auto& o = pb.env.obstacles()[k];
      const bool past_a = plan.assignment.delta_a[n][k];
      const bool past_b = plan.assignment.delta_b[n][k];
      EXPECT_EQ(past_a, j.landing.x() > o.A);
      EXPECT_EQ(past_b, j.landing.x() > o.B);
      EXPECT_TRUE(!past_b || past_a);
      const auto h = clearance_heights(pb.model, j.takeoff, j.v, j.theta, o);
      if (past_a != static_cast<bool>(da_prev[k])) {
        EXPECT_GE(h.z_ae, o.H + pb.env->margin_v - tol);
      }
      if (past_b != static_cast<bool>(db_prev[k])) {
        EXPECT_GE(h.z_bk, o.H + pb.env->margin_v - tol);
      }
      da_prev[k] = past_a;
      db_prev[k] = past_b;
    }
  }
  EXPECT_NEAR(plan.total_flight_time, sum, 1e-12);
  if (!plan.jumps.empty()) {
    EXPECT_NEAR(plan.jumps.back().landing.x(), pb.x_t, tol);
  }
  double worst = 0.0;
  EXPECT_TRUE(certify(pb, plan, tol, &worst)) << "worst residual " << worst;
}

TEST(VelocityComponents, Cases) {
  const Vec2 a = velocity_components(1.0, kPi / 2);
  EXPECT_NEAR(a.x(), 0.0, 1e-15);
  EXPECT_NEAR(a.y(), 1.0, 1e-15);
  const Vec2 b = velocity_components(2.0, deg2rad(60.0));
  EXPECT_NEAR(b.x(), 1.0, 1e-12);
  EXPECT_NEAR(b.y(), 1.7320508, 1e-7);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> v(0.1, 5.0), th(0.0, kPi / 2);
  for (int i = 0; i < 100; ++i) {
    const double s = v(rng);
    EXPECT_NEAR(velocity_components(s, th(rng)).squaredNorm(), s * s, 1e-12);
  }
}

TEST(Rollout, ClosedFormProjectile) {
  // r_t = r_f and theta = theta_f: no offsets.
  LegParams leg;
  leg.r_takeoff = leg.r_flight;
  leg.theta_flight = deg2rad(45.0);
  const auto model = OffsetModel::from_leg(leg);
  const double v = 3.0, th = deg2rad(45.0), t = 2.0 * v * std::sin(th) / g;
  const auto pts = rollout(model, Vec2(0.5, 0.2), {{t}, {v}, {th}});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_NEAR(pts[1].y(), 0.2, 1e-12);
  EXPECT_NEAR(pts[1].x() - 0.5, 0.9174, 5e-5);
  EXPECT_NEAR(pts[1].x() - 0.5, v * v / g, 1e-12);
  const auto two = rollout(model, Vec2(0.5, 0.2), {{t, t}, {v, v}, {th, th}});
  EXPECT_NEAR(two[2].x() - 0.5, 2.0 * v * v / g, 1e-12);
}

TEST(Rollout, ZeroAirTimeAppliesOffsetsOnly) {
  const auto model = OffsetModel::from_leg(LegParams{});
  const double th = 1.0;
  const auto pts = rollout(model, Vec2(1.0, 0.0), {{0.0}, {2.0}, {th}});
  EXPECT_NEAR(pts[1].x(), 1.0 + model.at(th).c_xe, 1e-15);
  EXPECT_NEAR(pts[1].y(), model.at(th).c_ze, 1e-15);
}

TEST(ClearanceHeights, Cases) {
  const auto pm = OffsetModel::point_mass();
  const Obstacle at_start{"o", 0.0, 0.5, 0.1};
  const auto h0 = clearance_heights(pm, Vec2(0.0, 0.3), 2.0, 1.0, at_start);
  EXPECT_NEAR(h0.t_a, 0.0, 1e-15);
  EXPECT_NEAR(h0.z_ae, 0.3, 1e-15);

  const double v = 3.0, th = deg2rad(50.0);
  const Vec2 vel = velocity_components(v, th);
  const double range = 2.0 * vel.x() * vel.y() / g;
  const Obstacle mid{"o", 0.5 * range, 0.5 * range + 0.1, 0.1};
  const auto h = clearance_heights(pm, Vec2::Zero(), v, th, mid);
  EXPECT_NEAR(h.z_ae, vel.y() * vel.y() / (2 * g), 1e-12);
  EXPECT_GT(h.t_b, h.t_a);

  try {
    clearance_heights(pm, Vec2::Zero(), 0.0, 1.0, mid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoForwardProgress);
  }
}

TEST(ConstraintResiduals, ExactSingleFlatJumpIsFeasible) {
  const auto pb = problem(flat(), 0.5);
  const auto vars = aimed(Vec2::Zero(), Vec2(0.5, 0.0), deg2rad(45.0));
  const auto res = constraint_residuals(pb, vars, assignment_from_segments(pb.env, {{0.0, 3.0, 0.0}}));
  EXPECT_LE(res.max_violation(), 1e-12);
}

TEST(ConstraintResiduals, EdgeBandViolation) {
  Parkour p = flat();
  p.obstacles = {{"box", 1.0, 1.6, 0.2}};
  p.margin_h = 0.1;
  const auto pb = problem(p, 1.025);
  const auto vars = aimed(Vec2::Zero(), Vec2(1.0 + 0.1 / 4, 0.2), deg2rad(60.0));
  BinaryAssignment asg{{{1}}, {{0}}};
  const auto res = constraint_residuals(pb, vars, asg);
  EXPECT_NEAR(res.block_violation(3), 0.1 / 4, 1e-12);
  EXPECT_LE(res.block_violation(2), 1e-12);
  EXPECT_LE(res.block_violation(1), 1e-12);
}

TEST(ConstraintResiduals, FrontClearanceViolation) {
  const double v = 3.0, th = deg2rad(60.0), A = 0.5;
  const Vec2 vel = velocity_components(v, th);
  const double tau = A / vel.x();
  const double foot_at_front = vel.y() * tau - 0.5 * g * tau * tau;
  Parkour p = flat();
  p.margin_v = 0.06;
  p.obstacles = {{"box", A, 1.5, foot_at_front - 0.03}};
  const auto pb = problem(p, 1.0);
  BinaryAssignment asg{{{1}}, {{0}}};
  const auto res = constraint_residuals(pb, {{0.5}, {v}, {th}}, asg);
  EXPECT_NEAR(res.a[0], 0.03, 1e-12);
  EXPECT_NEAR(res.a[1], 0.0, 1e-15);
}

TEST(ConstraintResiduals, RestrictedAreaAndBinaryBlocks) {
  Parkour p = flat();
  p.areas = {{"red", 0.4, 0.6}};
  p.obstacles = {{"box", 1.5, 2.0, 0.2}};
  const auto pb = problem(p, 0.55);
  const auto vars = aimed(Vec2::Zero(), Vec2(0.55, 0.0), deg2rad(45.0));
  const auto res = constraint_residuals(pb, vars, BinaryAssignment{{{1}}, {{0}}});
  EXPECT_NEAR(res.r[0], 0.05, 1e-12);
  // Claimed past the front while landing 0.95 m before it.
  EXPECT_NEAR(res.o1[0], 0.95, 1e-12);
  // The claimed top height does not match the ground.
  EXPECT_NEAR(res.o2[0], -0.2, 1e-12);
}

TEST(InitialGuess, FlatCases) {
  const Limits lim;
  const auto one = initial_guess(1, 0.0, 0.5, lim);
  EXPECT_NEAR(one.v[0], 2.2147, 5e-5);
  EXPECT_NEAR(one.t[0], 0.3193, 5e-5);
  EXPECT_DOUBLE_EQ(one.theta[0], lim.theta_min);
  const auto two = initial_guess(2, 0.0, 1.0, lim);
  EXPECT_NEAR(two.v[1], one.v[0], 1e-12);
  EXPECT_NEAR(two.t[0] + two.t[1], 2.0 * one.t[0], 1e-12);
  const auto zero_gap = initial_guess(1, 1.0, 1.0, lim);
  EXPECT_DOUBLE_EQ(zero_gap.v[0], lim.v_min);
  EXPECT_TRUE(initial_guess(0, 0.0, 1.0, lim).t.empty());
}

TEST(SolveAssignment, SingleFlatJumpClosedForm) {
  const auto pb = problem(flat(), 0.5);
  const auto out = solve_assignment(pb, {{0.0, 3.0, 0.0}}, std::nullopt, {});
  ASSERT_TRUE(out.ok());
  const auto& j = out.plan->jumps[0];
  EXPECT_NEAR(j.theta, deg2rad(45.0), 1e-3);
  EXPECT_NEAR(j.v, 2.2147, 3e-3);
  EXPECT_NEAR(j.t, 0.3193, 1e-3);
}

TEST(SolveAssignment, BeyondReachIsInfeasible) {
  const auto pb = problem(flat(5.0), 4.0);
  const auto out = solve_assignment(pb, {{0.0, 5.0, 0.0}}, std::nullopt, {});
  EXPECT_EQ(out.status, PlanStatus::kInfeasible);
  EXPECT_FALSE(out.plan.has_value());
}

TEST(SolveAssignment, LandsOnObstacleTop) {
  Parkour p = flat();
  p.obstacles = {{"box", 0.6, 1.2, 0.25}};
  const auto pb = problem(p, 0.9);
  const auto iv = landing_intervals(pb.env, 0.0, 0.9);
  ASSERT_EQ(iv.size(), 2u);
  const auto out = solve_assignment(pb, {iv[1]}, std::nullopt, {});
  ASSERT_TRUE(out.ok());
  const auto res = constraint_residuals(pb, out.plan->vars(), out.plan->assignment);
  EXPECT_LE(std::abs(res.o2[0]), 1e-6);
  EXPECT_NEAR(out.plan->jumps[0].landing.y(), locate(pb.env, out.plan->jumps[0].landing.x()), 1e-6);
  expect_plan_invariants(pb, *out.plan);
}

TEST(PlanJumps, FlatSingleJumpAtMinimumAngle) {
  const auto pb = problem(flat(), 0.9);
  const auto out = plan_jumps(pb, 1);
  ASSERT_TRUE(out.ok());
  EXPECT_NEAR(out.plan->jumps[0].theta, deg2rad(45.0), 1e-3);
  EXPECT_NEAR(out.plan->jumps[0].v, std::sqrt(0.9 * g), 3e-3);
  expect_plan_invariants(pb, *out.plan);
}

TEST(PlanJumps, ClearanceCostsFlightTime) {
  Parkour p = flat();
  const auto flat_out = plan_jumps(problem(p, 0.9), 1);
  p.obstacles = {{"box", 0.3, 0.6, 0.2}};
  const auto pb = problem(p, 0.9);
  const auto box_out = plan_jumps(pb, 1);
  ASSERT_TRUE(flat_out.ok());
  ASSERT_TRUE(box_out.ok());
  EXPECT_GT(box_out.plan->total_flight_time, flat_out.plan->total_flight_time + 1e-3);
  expect_plan_invariants(pb, *box_out.plan);
  const auto oracle = testing::oracle_plan(p, pb.model, pb.limits, 0.0, 0.9, 1);
  ASSERT_TRUE(oracle.has_value());
  EXPECT_LE(box_out.plan->total_flight_time, oracle->total_time * 1.02);
}

TEST(PlanJumps, ObstacleAboveMaximumApexIsInfeasible) {
  const Limits lim;
  const double apex = lim.v_max * lim.v_max / (2 * g);
  Parkour p = flat();
  p.obstacles = {{"wall", 0.5, 0.7, apex + 0.01}};
  const auto pb = problem(p, 1.2);
  for (int N = 1; N <= 3; ++N) {
    EXPECT_EQ(plan_jumps(pb, N).status, PlanStatus::kInfeasible) << N;
    EXPECT_FALSE(testing::oracle_plan(p, pb.model, lim, 0.0, 1.2, N).has_value()) << N;
  }
}

TEST(PlanJumps, TargetInsideRestrictedAreaIsInfeasible) {
  Parkour p = flat();
  p.areas = {{"red", 0.5, 1.5}};
  const auto pb = problem(p, 1.0);
  EXPECT_EQ(plan_jumps(pb, 1).status, PlanStatus::kInfeasible);
  EXPECT_FALSE(testing::oracle_plan(p, pb.model, pb.limits, 0.0, 1.0, 1).has_value());
}

TEST(PlanJumps, DegenerateRequests) {
  auto pb = problem(flat(), 0.0);
  const auto none = plan_jumps(pb, 0);
  ASSERT_TRUE(none.ok());
  EXPECT_TRUE(none.plan->jumps.empty());
  EXPECT_EQ(none.plan->total_flight_time, 0.0);

  pb = problem(flat(), 1.0);
  pb.x_s = 2.0;
  pb.x_t = 1.0;
  EXPECT_EQ(plan_jumps(pb, 1).status, PlanStatus::kInfeasible);
  pb.x_t = 2.5;
  EXPECT_EQ(plan_jumps(pb, 0).status, PlanStatus::kInfeasible);
}

TEST(PlanJumps, DeterministicWithLegOffsets) {
  Parkour p = flat(4.0);
  p.obstacles = {{"a", 0.8, 1.1, 0.2}, {"b", 2.0, 2.3, 0.15}};
  p.areas = {{"red", 1.5, 1.7}};
  const auto pb = problem(p, 3.0, OffsetModel::from_leg(LegParams{}));
  const auto a = plan_jumps(pb, 4);
  const auto b = plan_jumps(pb, 4);
  ASSERT_TRUE(a.ok());
  ASSERT_TRUE(b.ok());
  EXPECT_EQ(a.plan->total_flight_time, b.plan->total_flight_time);
  EXPECT_EQ(a.plan->assignment, b.plan->assignment);
  expect_plan_invariants(pb, *a.plan);
}

TEST(PlanJumps, NodeLimitReturnsBestSoFar) {
  Parkour p = flat(4.0);
  p.obstacles = {{"a", 0.8, 1.1, 0.2}, {"b", 2.0, 2.3, 0.15}};
  const auto pb = problem(p, 3.0, OffsetModel::from_leg(LegParams{}));
  SolverConfig tight;
  tight.max_nodes = 1;
  const auto out = plan_jumps(pb, 4, tight);
  EXPECT_TRUE(out.stats.node_limit_hit);
  EXPECT_FALSE(out.ok() && !out.plan->stats.node_limit_hit);
  SolverConfig few;
  few.max_nodes = 8;
  const auto partial = plan_jumps(pb, 4, few);
  if (partial.plan) {
    EXPECT_TRUE(partial.plan->stats.node_limit_hit);
    expect_plan_invariants(pb, *partial.plan);
  }
}

TEST(PlanJumps, SolutionsSatisfyInvariantsOnRandomCourses) {
  std::mt19937_64 rng(99);
  int solved = 0;
  for (int i = 0; i < 15; ++i) {
    const auto rc = testing::random_course(rng);
    const auto pb = problem(rc.parkour, rc.x_t, OffsetModel::from_leg(LegParams{}));
    const auto out = plan_jumps(pb, rc.jumps);
    if (!out.ok()) continue;
    ++solved;
    expect_plan_invariants(pb, *out.plan);
  }
  EXPECT_GE(solved, 10);
}

TEST(Limits, Validation) {
  EXPECT_NO_THROW(validate(Limits{}));
  Limits l;
  l.theta_max = kPi / 2;
  EXPECT_THROW(validate(l), Error);
  l = Limits{};
  l.t_min = 0.0;
  EXPECT_THROW(validate(l), Error);
  l = Limits{};
  l.v_min = 4.0;
  EXPECT_THROW(validate(l), Error);
}

}  // namespace
}  // namespace mppc
