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

// Receding-horizon step: clip the goal to the lookahead window, try jump
// counts from the flat-ground minimum upwards and return the first jump of
// the first feasible plan.

#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mppc/env_model.hpp"
#include "mppc/leg_kinematics.hpp"
#include "mppc/miopt_planner.hpp"

namespace mppc {

struct MppcConfig {
  double lookahead = 2.0;  // m
  double x_goal = 7.2;     // m
  Limits limits;
  int n_slack = 3;
  bool operator==(const MppcConfig&) const = default;
};

inline void validate(const MppcConfig& c) {
  if (!(std::isfinite(c.lookahead) && c.lookahead > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lookahead must be positive");
  }
  if (!std::isfinite(c.x_goal)) throw Error(ErrorCode::kInvalidArgument, "goal must be finite");
  if (c.n_slack < 0) throw Error(ErrorCode::kInvalidArgument, "n_slack must be non-negative");
  validate(c.limits);
}

struct MppcResult {
  JumpSpec first_jump;
  Plan full_plan;
  double target_used = 0.0;
  int horizon_used = 0;
  double setup_time = 0.0;  // s
  double solve_time = 0.0;  // s
  double loop_time = 0.0;   // s
  long nodes = 0;
};

struct MppcOutcome {
  PlanStatus status = PlanStatus::kInfeasible;
  std::optional<MppcResult> result;
  std::string message;
  double loop_time = 0.0;

  bool ok() const { return result.has_value(); }
};

/// Largest flat-ground foot travel of one jump at the minimum angle.
inline double max_flat_range(const Limits& limits, const OffsetModel& model) {
  const double g = model.gravity();
  return limits.v_max * limits.v_max * std::sin(2.0 * limits.theta_min) / g + model.at(limits.theta_min).c_xe;
}

/// Candidate horizons [N_min, ..., N_min + n_slack].
inline std::vector<int> jumps_range(double x_s, double x_t, const Limits& limits, int n_slack = 3,
                                    const OffsetModel& model = OffsetModel::point_mass()) {
  if (!(x_t > x_s)) throw Error(ErrorCode::kInvalidArgument, "target must lie ahead of the start");
  const double range = max_flat_range(limits, model);
  if (!(range > 0.0)) throw Error(ErrorCode::kInvalidArgument, "limits allow no forward range");
  // A gap equal to k ranges needs exactly k jumps; the small slack absorbs
  // rounding in the division.
  const double ratio = (x_t - x_s) / range;
  const int n_min = std::max(1, static_cast<int>(std::ceil(ratio - 1e-12)));
  std::vector<int> out;
  for (int n = n_min; n <= n_min + n_slack; ++n) out.push_back(n);
  return out;
}

/// Target for this step: min(x_s + p, x_g), pulled back to the closest
/// permitted landing point when it falls inside a margin band or a
/// restricted area.
inline std::optional<double> step_target(const ValidatedParkour& env, double x_s, const MppcConfig& config) {
  const double raw = std::min(x_s + config.lookahead, config.x_goal);
  if (!(raw > x_s)) return std::nullopt;
  const double hi = std::min(raw, env->x_max);
  if (!(hi > x_s)) return std::nullopt;
  const auto intervals = landing_intervals(env, x_s, hi);
  if (intervals.empty()) return std::nullopt;
  const auto& last = intervals.back();
  if (last.hi <= x_s) return std::nullopt;
  return last.hi;
}

inline MppcOutcome mppc_step(const ValidatedParkour& env, const OffsetModel& model, double x_s,
                             const MppcConfig& config, const SolverConfig& solver = {}) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  validate(config);
  MppcOutcome out;
  const double z_s = locate(env, x_s);
  const auto target = step_target(env, x_s, config);
  if (!target) {
    out.message = "no permitted landing point ahead of the start";
    out.loop_time = std::chrono::duration<double>(Clock::now() - t0).count();
    return out;
  }
  JumpProblem pb{env, model, config.limits, x_s, z_s, *target};
  const auto horizons = jumps_range(x_s, *target, config.limits, config.n_slack, model);
  const double setup = std::chrono::duration<double>(Clock::now() - t0).count();

  long nodes = 0;
  double solve = 0.0;
  for (int n : horizons) {
    auto res = plan_jumps(pb, n, solver);
    nodes += res.stats.nodes_expanded;
    solve += res.stats.solve_seconds + res.stats.setup_seconds;
    if (res.plan) {
      MppcResult r;
      r.full_plan = std::move(*res.plan);
      r.first_jump = r.full_plan.jumps.front();
      r.target_used = *target;
      r.horizon_used = n;
      r.setup_time = setup;
      r.solve_time = solve;
      r.nodes = nodes;
      r.loop_time = std::chrono::duration<double>(Clock::now() - t0).count();
      out.status = res.status == PlanStatus::kNodeLimit ? PlanStatus::kNodeLimit : PlanStatus::kSolved;
      out.loop_time = r.loop_time;
      out.result = std::move(r);
      return out;
    }
    out.status = res.status;
    out.message = res.message;
  }
  out.status = PlanStatus::kInfeasible;
  if (out.message.empty()) out.message = "no horizon produced a feasible plan";
  out.loop_time = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

}  // namespace mppc
