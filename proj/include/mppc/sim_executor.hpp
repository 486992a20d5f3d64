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

// Event-level hopper simulator.
//
// The hip is a point mass. In flight it follows the closed-form ballistic
// arc and the leg is held in the flight pose; on the ground the foot is
// pinned to an anchor and the hip is placed by the leg's joint angles, which
// track per-phase setpoints through a first-order lag. Exertion pushes the
// hip along the launch line with constant acceleration and releases it at the
// end of the stroke. Landings and face collisions are solved exactly inside a
// tick, so with zero noise the executed landings reproduce the plan.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mppc/env_model.hpp"
#include "mppc/leg_kinematics.hpp"
#include "mppc/miopt_planner.hpp"
#include "mppc/mppc.hpp"

namespace mppc {

enum class Phase { kInitialization, kFlight, kAbsorption, kReposition, kStaging, kExertion };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kInitialization: return "Initialization";
    case Phase::kFlight: return "Flight";
    case Phase::kAbsorption: return "Absorption";
    case Phase::kReposition: return "Reposition";
    case Phase::kStaging: return "Staging";
    case Phase::kExertion: return "Exertion";
  }
  return "Unknown";
}

inline bool is_grounded(Phase p) { return p != Phase::kFlight; }

struct JointGains {
  double kp = 40.0;
  double kd = 1.0;
  bool operator==(const JointGains&) const = default;
};

// Joint tracking is rendered as a first-order lag with rate kp / kd.
struct PhaseGains {
  JointGains flight{60.0, 1.0};
  JointGains absorption{25.0, 1.0};
  JointGains reposition{40.0, 1.0};
  JointGains staging{120.0, 1.0};
  JointGains exertion{200.0, 1.0};
  double initialization_time = 0.1;
  double absorption_time = 0.15;
  double reposition_time = 0.20;
  double staging_time = 0.10;
  double crouch_extension = 0.22;  // foot-hip distance at the start of exertion
  bool operator==(const PhaseGains&) const = default;
};

inline void validate(const PhaseGains& g, const LegParams& leg) {
  for (const auto* j : {&g.flight, &g.absorption, &g.reposition, &g.staging, &g.exertion}) {
    if (!(j->kp >= 0.0 && j->kd > 0.0 && std::isfinite(j->kp) && std::isfinite(j->kd))) {
      throw Error(ErrorCode::kInvalidArgument, "gains need kp >= 0 and kd > 0");
    }
  }
  for (double d : {g.initialization_time, g.absorption_time, g.reposition_time, g.staging_time}) {
    if (!(d > 0.0 && std::isfinite(d))) throw Error(ErrorCode::kInvalidArgument, "phase durations must be positive");
  }
  if (!(g.crouch_extension > std::abs(leg.l1 - leg.l2) && g.crouch_extension < leg.r_takeoff)) {
    throw Error(ErrorCode::kInvalidArgument, "crouch extension must lie inside the leg annulus and below r_takeoff");
  }
}

struct NoiseModel {
  double sigma_v = 0.0;      // m/s
  double sigma_theta = 0.0;  // rad
  bool operator==(const NoiseModel&) const = default;
};

// When a scripted event fires: at an absolute time, or `delay` seconds after
// the take-off of jump `after_takeoff` (1-based).
struct Trigger {
  std::optional<double> at_time;
  std::optional<int> after_takeoff;
  double delay = 0.0;
  bool operator==(const Trigger&) const = default;
};

struct DisturbanceEvent {
  Trigger trigger;
  Vec2 dv = Vec2::Zero();
  bool operator==(const DisturbanceEvent&) const = default;
};

struct EnvironmentEvent {
  Trigger trigger;
  EnvironmentUpdate update;
  bool operator==(const EnvironmentEvent&) const = default;
};

struct SimState {
  double time = 0.0;
  Phase phase = Phase::kInitialization;
  double phase_time = 0.0;
  Vec2 hip = Vec2::Zero();
  Vec2 hip_vel = Vec2::Zero();
  JointState joints;
  std::optional<Vec2> contact;  // foot anchor while grounded
  std::optional<MppcResult> pending_plan;
  int jumps = 0;

  // Ballistic arc of the current flight.
  Vec2 flight_origin = Vec2::Zero();
  Vec2 flight_velocity = Vec2::Zero();
  double flight_t0 = 0.0;

  // Launch of the current exertion.
  double theta_c = 0.0;
  double v_c = 0.0;
  double accel = 0.0;
};

/// Adds a velocity impulse to a flying hip. Grounded states reject it.
inline SimState inject_disturbance(SimState s, const Vec2& dv) {
  if (is_grounded(s.phase)) {
    throw Error(ErrorCode::kWrongPhase, "disturbances apply only in flight, phase is " + std::string(to_string(s.phase)));
  }
  if (!all_finite({dv.x(), dv.y()})) throw Error(ErrorCode::kInvalidArgument, "impulse must be finite");
  s.hip_vel += dv;
  s.flight_origin = s.hip;
  s.flight_velocity = s.hip_vel;
  s.flight_t0 = s.time;
  return s;
}

// ---------------------------------------------------------------------------
// Contact detection.

enum class ContactKind { kNone, kLanding, kFrontCollision, kBackCollision };

inline std::string_view to_string(ContactKind k) {
  switch (k) {
    case ContactKind::kNone: return "None";
    case ContactKind::kLanding: return "Landing";
    case ContactKind::kFrontCollision: return "FrontCollision";
    case ContactKind::kBackCollision: return "BackCollision";
  }
  return "Unknown";
}

struct ContactEvent {
  ContactKind kind = ContactKind::kNone;
  double time = 0.0;  // since the start of the segment
  Vec2 point = Vec2::Zero();
  int obstacle = -1;
  bool margin_violation = false;  // landing in an edge band or restricted area
};

// Foot path p(s) = origin + velocity s - g s^2 / 2 (z only), for s in
// [0, duration]. The knee rides at a fixed offset from the foot.
struct FootArc {
  Vec2 origin = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double gravity = kDefaultGravity;
  Vec2 knee_offset = Vec2::Zero();

  Vec2 at(double s) const { return {origin.x() + velocity.x() * s, origin.y() + velocity.y() * s - 0.5 * gravity * s * s}; }
  double vz(double s) const { return velocity.y() - gravity * s; }
};

namespace detail {

// Roots of a + b s - c s^2 / 2 = 0 in ascending order (c >= 0).
inline std::vector<double> arc_roots(double a, double b, double c) {
  if (c == 0.0) {
    if (b == 0.0) return {};
    return {-a / b};
  }
  const double disc = b * b + 2.0 * c * a;
  if (disc < 0.0) return {};
  const double sq = std::sqrt(disc);
  return {(b - sq) / c, (b + sq) / c};
}

// First s in [0, limit] where the x-coordinate origin_x + vx s crosses
// `edge` moving forward.
inline std::optional<double> edge_crossing(double origin_x, double vx, double edge, double limit) {
  if (!(vx > 0.0) || origin_x >= edge) return std::nullopt;
  const double s = (edge - origin_x) / vx;
  if (s > limit) return std::nullopt;
  return s;
}

}  // namespace detail

// Landings this close to a forbidden zone count as on its boundary; matches
// the planner's certification tolerance.
inline constexpr double kLandingSlack = 1e-6;

/// First contact of the foot (and knee) along the arc during [0, duration].
inline ContactEvent detect_contact(const ValidatedParkour& env, const FootArc& arc, double duration) {
  ContactEvent best;
  best.time = std::numeric_limits<double>::infinity();
  auto consider = [&](ContactKind kind, double s, const Vec2& p, int k) {
    if (s < best.time) {
      best.kind = kind;
      best.time = s;
      best.point = p;
      best.obstacle = k;
    }
  };
  constexpr double kEps = 1e-12;
  for (const auto& piece : terrain_pieces(env)) {
    for (double s : detail::arc_roots(arc.origin.y() - piece.z, arc.velocity.y(), arc.gravity)) {
      if (s < kEps || s > duration) continue;
      if (!(arc.vz(s) < 0.0)) continue;
      const Vec2 p = arc.at(s);
      if (p.x() >= piece.lo - kEps && p.x() <= piece.hi + kEps) consider(ContactKind::kLanding, s, {p.x(), piece.z}, piece.obstacle);
    }
  }
  const auto& obstacles = env.obstacles();
  for (int k = 0; k < static_cast<int>(obstacles.size()); ++k) {
    const auto& o = obstacles[k];
    if (auto s = detail::edge_crossing(arc.origin.x(), arc.velocity.x(), o.A, duration)) {
      const Vec2 p = arc.at(*s);
      if (p.y() < o.H) consider(ContactKind::kFrontCollision, *s, p, k);
    }
    for (double edge : {o.A, o.B}) {
      const double knee_x0 = arc.origin.x() + arc.knee_offset.x();
      if (auto s = detail::edge_crossing(knee_x0, arc.velocity.x(), edge, duration)) {
        const Vec2 p = arc.at(*s) + arc.knee_offset;
        if (p.y() < o.H) {
          consider(edge == o.A ? ContactKind::kFrontCollision : ContactKind::kBackCollision, *s, p, k);
        }
      }
    }
  }
  if (best.kind == ContactKind::kLanding) best.margin_violation = !landing_permitted(env, best.point.x(), kLandingSlack);
  if (best.kind == ContactKind::kNone) best.time = 0.0;
  return best;
}

/// Straight segment from p0 to p1 (no gravity, unit duration).
inline ContactEvent detect_contact(const ValidatedParkour& env, const Vec2& p0, const Vec2& p1) {
  FootArc arc;
  arc.origin = p0;
  arc.velocity = p1 - p0;
  arc.gravity = 0.0;
  return detect_contact(env, arc, 1.0);
}

// ---------------------------------------------------------------------------
// Episode log.

struct TickSample {
  double time = 0.0;
  Phase phase = Phase::kInitialization;
  Vec2 hip = Vec2::Zero();
  Vec2 hip_vel = Vec2::Zero();
  Vec2 foot = Vec2::Zero();
  Vec2 knee = Vec2::Zero();
};

struct StepTiming {
  double setup = 0.0;
  double solve = 0.0;
  double loop = 0.0;
  int horizon = 0;
  long nodes = 0;
  double target = 0.0;
  bool final_window = false;
};

struct JumpRecord {
  int index = 0;  // 1-based
  double takeoff_time = 0.0;
  double landing_time = 0.0;
  Vec2 takeoff = Vec2::Zero();  // foot anchor before the jump
  JumpSpec planned;
  std::vector<JumpSpec> plan;  // the full plan the jump was taken from
  std::uint64_t env_version = 0;
  Vec2 actual_landing = Vec2::Zero();
  bool landed = false;
  double theta_c = 0.0;
  double v_c = 0.0;
  double energy_release = 0.0;
  double energy_landing = 0.0;
  bool margin_violation = false;
  bool disturbed = false;
  StepTiming timing;

  double energy_drift() const {
    return std::abs(energy_landing - energy_release) / std::max(std::abs(energy_release), 1e-12);
  }
};

struct LogEvent {
  double time = 0.0;
  std::string kind;
  std::string detail;
};

enum class Outcome { kRunning, kGoalReached, kCollision, kOvershoot, kStuck, kOutOfCourse, kTimeout };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kRunning: return "Running";
    case Outcome::kGoalReached: return "GoalReached";
    case Outcome::kCollision: return "Collision";
    case Outcome::kOvershoot: return "Overshoot";
    case Outcome::kStuck: return "Stuck";
    case Outcome::kOutOfCourse: return "OutOfCourse";
    case Outcome::kTimeout: return "Timeout";
  }
  return "Unknown";
}

struct EpisodeLog {
  std::vector<TickSample> samples;
  std::vector<JumpRecord> jumps;
  std::vector<LogEvent> events;
  Outcome outcome = Outcome::kRunning;
  double final_x = 0.0;
  double duration = 0.0;
  int soft_failures = 0;
  int hard_failures = 0;

  bool success() const { return outcome == Outcome::kGoalReached; }
  int landed_jumps() const {
    int n = 0;
    for (const auto& j : jumps) n += j.landed ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------

struct ExecutorOptions {
  double dt = 1.0 / 200.0;
  double goal_tolerance = 0.05;
  double max_time = 120.0;
  double stuck_timeout = 1.0;  // s without a feasible plan and without a course change
  bool async_planning = false;
  bool record_samples = true;
};

inline double hip_energy(const Vec2& hip, const Vec2& vel, double g) { return 0.5 * vel.squaredNorm() + g * hip.y(); }

// Owns one simulated hopper and the course it runs on. Not thread-safe; the
// live service serializes access.
class Executor {
 public:
  Executor(ValidatedParkour env, LegParams leg, MppcConfig mppc, SolverConfig solver, PhaseGains gains,
           NoiseModel noise, std::uint64_t seed, double x_start, ExecutorOptions options = {})
      : env_(std::move(env)),
        leg_(leg),
        mppc_(mppc),
        solver_(solver),
        gains_(gains),
        noise_(noise),
        rng_(seed),
        options_(options) {
    validate(leg_);
    validate(mppc_);
    validate(gains_, leg_);
    if (!(options_.dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
    model_ = OffsetModel::from_leg(leg_);
    flight_ = flight_config(leg_);
    const double z = locate(env_, x_start);
    state_.contact = Vec2(x_start, z);
    state_.joints = flight_.joints;
    state_.hip = *state_.contact - forward_kinematics(leg_, state_.joints);
    log_.final_x = x_start;
    if (std::abs(x_start - mppc_.x_goal) <= options_.goal_tolerance) finish(Outcome::kGoalReached, "start is at the goal");
  }

  const SimState& state() const { return state_; }
  const EpisodeLog& log() const { return log_; }
  EpisodeLog take_log() { return std::move(log_); }
  const ValidatedParkour& env() const { return env_; }
  std::uint64_t env_version() const { return env_version_; }
  const LegParams& leg() const { return leg_; }
  const MppcConfig& mppc_config() const { return mppc_; }
  bool finished() const { return log_.outcome != Outcome::kRunning; }
  // The plan the current or upcoming jump comes from.
  const std::optional<MppcResult>& active_plan() const { return active_plan_; }

  Vec2 foot() const {
    if (state_.contact) return *state_.contact;
    return state_.hip + forward_kinematics(leg_, state_.joints);
  }
  Vec2 knee() const { return state_.hip + knee_position(leg_, state_.joints); }

  /// Applies a course edit; takes planning effect at the next Reposition.
  std::uint64_t apply(const EnvironmentUpdate& update) {
    env_ = apply_update(env_, update);
    ++env_version_;
    event("EnvironmentUpdate", "version " + std::to_string(env_version_));
    return env_version_;
  }

  void disturb(const Vec2& dv) {
    state_ = inject_disturbance(state_, dv);
    if (!log_.jumps.empty()) log_.jumps.back().disturbed = true;
    event("Disturbance", "dv = (" + std::to_string(dv.x()) + ", " + std::to_string(dv.y()) + ")");
  }

  void step() {
    if (finished()) return;
    const double dt = options_.dt;
    advance(dt);
    state_.time += dt;
    if (options_.record_samples) record_sample();
    if (!finished() && state_.time >= options_.max_time) finish(Outcome::kTimeout, "tick budget exhausted");
  }

 private:
  void event(const std::string& kind, const std::string& detail) { log_.events.push_back({state_.time, kind, detail}); }

  void finish(Outcome o, const std::string& detail) {
    log_.outcome = o;
    log_.duration = state_.time;
    log_.final_x = foot().x();
    event(std::string(to_string(o)), detail);
  }

  void record_sample() {
    log_.samples.push_back({state_.time, state_.phase, state_.hip, state_.hip_vel, foot(), knee()});
  }

  void enter(Phase p, double carried = 0.0) {
    state_.phase = p;
    state_.phase_time = carried;
  }

  double lag_rate() const {
    const JointGains* g = &gains_.reposition;
    switch (state_.phase) {
      case Phase::kFlight: g = &gains_.flight; break;
      case Phase::kAbsorption: g = &gains_.absorption; break;
      case Phase::kStaging: g = &gains_.staging; break;
      case Phase::kExertion: g = &gains_.exertion; break;
      default: break;
    }
    return g->kp / g->kd;
  }

  // Grounded pose tracking towards a (extension, angle) setpoint.
  void track(double r, double angle, double dt) {
    const JointState target = inverse_kinematics(leg_, foot_from_polar(r, angle), kKneeTrailing);
    const double alpha = 1.0 - std::exp(-lag_rate() * dt);
    JointState q = state_.joints;
    const double dq1 = wrap_angle(target.q1 - q.q1), dq2 = target.q2 - q.q2;
    q.q1 += alpha * dq1;
    q.q2 += alpha * dq2;
    set_grounded_pose(q, dt);
  }

  void set_grounded_pose(const JointState& q, double dt) {
    const Vec2 hip = *state_.contact - forward_kinematics(leg_, q);
    state_.hip_vel = dt > 0.0 ? Vec2((hip - state_.hip) / dt) : Vec2::Zero();
    state_.joints.q1d = dt > 0.0 ? wrap_angle(q.q1 - state_.joints.q1) / dt : 0.0;
    state_.joints.q2d = dt > 0.0 ? (q.q2 - state_.joints.q2) / dt : 0.0;
    state_.joints.q1 = q.q1;
    state_.joints.q2 = q.q2;
    state_.hip = hip;
  }

  double current_angle() const {
    const Vec2 d = state_.hip - *state_.contact;
    return std::atan2(d.y(), d.x());
  }

  void advance(double dt) {
    state_.phase_time += dt;
    switch (state_.phase) {
      case Phase::kInitialization:
        track(gains_.crouch_extension, leg_.theta_flight, dt);
        if (state_.phase_time >= gains_.initialization_time) enter_reposition();
        break;
      case Phase::kAbsorption:
        track(gains_.crouch_extension, leg_.theta_flight, dt);
        if (state_.phase_time >= gains_.absorption_time) enter_reposition();
        break;
      case Phase::kReposition: reposition(dt); break;
      case Phase::kStaging:
        track(gains_.crouch_extension, state_.pending_plan->first_jump.theta, dt);
        if (state_.phase_time >= gains_.staging_time) start_exertion(state_.phase_time - gains_.staging_time);
        break;
      case Phase::kExertion: exertion(state_.phase_time); break;
      case Phase::kFlight: flight(dt); break;
    }
  }

  // --- planning -----------------------------------------------------------

  void enter_reposition() {
    enter(Phase::kReposition);
    state_.pending_plan.reset();
    infeasible_since_.reset();
    request_plan();
  }

  void request_plan() {
    planned_version_ = env_version_;
    const double x_s = state_.contact->x();
    if (options_.async_planning) {
      future_ = std::async(std::launch::async, [env = env_, model = model_, x_s, cfg = mppc_, solver = solver_] {
        return mppc_step(env, model, x_s, cfg, solver);
      });
    } else {
      consume(mppc_step(env_, model_, x_s, mppc_, solver_));
    }
  }

  void consume(MppcOutcome outcome) {
    if (outcome.ok()) {
      state_.pending_plan = std::move(outcome.result);
      infeasible_since_.reset();
      if (outcome.status == PlanStatus::kNodeLimit) event("NodeLimit", "plan returned at the node limit");
    } else {
      event("PlanInfeasible", outcome.message);
      if (!infeasible_since_) infeasible_since_ = state_.time;
    }
  }

  void reposition(double dt) {
    if (future_.valid() && future_.wait_for(std::chrono::seconds(0)) == std::future_status::ready) consume(future_.get());
    if (!state_.pending_plan && !future_.valid() && infeasible_since_) {
      if (env_version_ != planned_version_) {
        request_plan();
      } else if (state_.time - *infeasible_since_ >= options_.stuck_timeout) {
        finish(Outcome::kStuck, "no feasible plan from x = " + std::to_string(state_.contact->x()));
        return;
      }
    }
    const double angle = state_.pending_plan ? state_.pending_plan->first_jump.theta : current_angle();
    track(gains_.crouch_extension, angle, dt);
    if (state_.pending_plan && state_.phase_time >= gains_.reposition_time) enter(Phase::kStaging);
  }

  // --- exertion and flight ------------------------------------------------

  void start_exertion(double carried) {
    const auto& jump = state_.pending_plan->first_jump;
    std::normal_distribution<double> unit(0.0, 1.0);
    const double n_theta = noise_.sigma_theta > 0.0 ? noise_.sigma_theta * unit(rng_) : 0.0;
    const double n_v = noise_.sigma_v > 0.0 ? noise_.sigma_v * unit(rng_) : 0.0;
    state_.theta_c = jump.theta + n_theta;
    state_.v_c = std::max(0.0, exertion_velocity(jump.v, jump.theta, state_.theta_c) + n_v);
    const double stroke = leg_.r_takeoff - gains_.crouch_extension;
    state_.accel = state_.v_c * state_.v_c / (2.0 * stroke);
    // Snap onto the launch line at the crouch extension.
    set_grounded_pose(inverse_kinematics(leg_, foot_from_polar(gains_.crouch_extension, state_.theta_c)), 0.0);
    state_.hip_vel.setZero();
    active_plan_ = state_.pending_plan;

    JumpRecord rec;
    rec.index = state_.jumps + 1;
    rec.takeoff = *state_.contact;
    rec.planned = jump;
    rec.plan = active_plan_->full_plan.jumps;
    rec.env_version = planned_version_;
    rec.theta_c = state_.theta_c;
    rec.v_c = state_.v_c;
    rec.timing = {active_plan_->setup_time, active_plan_->solve_time, active_plan_->loop_time,
                  active_plan_->horizon_used, active_plan_->nodes, active_plan_->target_used,
                  std::abs(active_plan_->target_used - mppc_.x_goal) < 1e-12};
    log_.jumps.push_back(std::move(rec));
    enter(Phase::kExertion, carried);
    exertion(carried);
  }

  void exertion(double tau) {
    const double stroke = leg_.r_takeoff - gains_.crouch_extension;
    const Vec2 dir(std::cos(state_.theta_c), std::sin(state_.theta_c));
    const double t_release = state_.accel > 0.0 ? std::sqrt(2.0 * stroke / state_.accel) : std::numeric_limits<double>::infinity();
    const Vec2 force = exertion_force(leg_, state_.v_c, gains_.crouch_extension, state_.theta_c);
    if (tau < t_release) {
      const double r = gains_.crouch_extension + 0.5 * state_.accel * tau * tau;
      const JointState q = inverse_kinematics(leg_, foot_from_polar(r, state_.theta_c));
      set_grounded_pose(q, 0.0);
      state_.hip_vel = state_.accel * tau * dir;
      last_torques_ = joint_torques(leg_, q, force);
      return;
    }
    // Release inside this tick; the remainder is flown.
    const double over = tau - t_release;
    ++state_.jumps;
    state_.hip = *state_.contact + leg_.r_takeoff * dir;
    state_.hip_vel = state_.v_c * dir;
    state_.contact.reset();
    state_.joints = flight_.joints;
    state_.flight_origin = state_.hip;
    state_.flight_velocity = state_.hip_vel;
    state_.flight_t0 = state_.time + options_.dt - over;
    auto& rec = log_.jumps.back();
    rec.takeoff_time = state_.flight_t0;
    rec.energy_release = hip_energy(state_.hip, state_.hip_vel, leg_.gravity);
    state_.pending_plan.reset();
    enter(Phase::kFlight, over);
    fly_until(state_.flight_t0 + over);
    fire_takeoff_events_ = true;
  }

  void flight(double dt) { fly_until(state_.time + dt); }

  // Advances the flying hip to absolute time `t_end`, stopping at contact.
  void fly_until(double t_end) {
    const double g = leg_.gravity;
    const Vec2 foot_offset = forward_kinematics(leg_, flight_.joints);
    const Vec2 knee_offset = knee_position(leg_, flight_.joints) - foot_offset;
    const double t_from = std::max(state_.time, state_.flight_t0);
    const Vec2 hip0 = hip_at(t_from - state_.flight_t0);
    const Vec2 vel0(state_.flight_velocity.x(), state_.flight_velocity.y() - g * (t_from - state_.flight_t0));
    FootArc arc{hip0 + foot_offset, vel0, g, knee_offset};
    const double span = t_end - t_from;
    const auto contact = span > 0.0 ? detect_contact(env_, arc, span) : ContactEvent{};
    if (contact.kind == ContactKind::kNone) {
      state_.hip = hip_at(t_end - state_.flight_t0);
      state_.hip_vel = Vec2(state_.flight_velocity.x(), state_.flight_velocity.y() - g * (t_end - state_.flight_t0));
      if (state_.hip.x() > env_->x_max + 1.0) finish(Outcome::kOutOfCourse, "left the course");
      return;
    }
    const double t_hit = t_from + contact.time;
    state_.hip = hip_at(t_hit - state_.flight_t0);
    state_.hip_vel = Vec2(state_.flight_velocity.x(), state_.flight_velocity.y() - g * (t_hit - state_.flight_t0));
    auto& rec = log_.jumps.back();
    if (contact.kind != ContactKind::kLanding) {
      ++log_.hard_failures;
      rec.landing_time = t_hit;
      finish(Outcome::kCollision, std::string(to_string(contact.kind)) + " with obstacle " +
                                      env_.obstacles()[contact.obstacle].id + " at x = " +
                                      std::to_string(contact.point.x()));
      return;
    }
    rec.landed = true;
    rec.landing_time = t_hit;
    rec.actual_landing = contact.point;
    rec.energy_landing = hip_energy(state_.hip, state_.hip_vel, g);
    rec.margin_violation = contact.margin_violation;
    if (contact.margin_violation) {
      ++log_.soft_failures;
      event("MarginViolation", "landing at x = " + std::to_string(contact.point.x()));
    }
    state_.contact = contact.point;
    state_.hip_vel.setZero();
    enter(Phase::kAbsorption, t_end - t_hit);
    const double x = contact.point.x();
    if (std::abs(x - mppc_.x_goal) <= options_.goal_tolerance) {
      finish(Outcome::kGoalReached, "landed at x = " + std::to_string(x));
    } else if (x > mppc_.x_goal + options_.goal_tolerance) {
      finish(Outcome::kOvershoot, "landed at x = " + std::to_string(x) + " beyond the goal");
    }
  }

  Vec2 hip_at(double s) const {
    return {state_.flight_origin.x() + state_.flight_velocity.x() * s,
            state_.flight_origin.y() + state_.flight_velocity.y() * s - 0.5 * leg_.gravity * s * s};
  }

 public:
  /// True once per take-off; cleared by the caller that schedules
  /// jump-relative events.
  bool consume_takeoff_flag() { return std::exchange(fire_takeoff_events_, false); }
  const Vec2& last_torques() const { return last_torques_; }

 private:
  ValidatedParkour env_;
  LegParams leg_;
  MppcConfig mppc_;
  SolverConfig solver_;
  PhaseGains gains_;
  NoiseModel noise_;
  std::mt19937_64 rng_;
  ExecutorOptions options_;
  OffsetModel model_ = OffsetModel::point_mass();
  FlightConfig flight_;
  SimState state_;
  EpisodeLog log_;
  std::uint64_t env_version_ = 0;
  std::uint64_t planned_version_ = 0;
  std::optional<double> infeasible_since_;
  std::future<MppcOutcome> future_;
  std::optional<MppcResult> active_plan_;
  bool fire_takeoff_events_ = false;
  Vec2 last_torques_ = Vec2::Zero();
};

// ---------------------------------------------------------------------------

struct EpisodeSetup {
  Parkour parkour;
  LegParams leg;
  MppcConfig mppc;
  SolverConfig solver;
  PhaseGains gains;
  NoiseModel noise;
  std::uint64_t seed = 0;
  double x_start = 0.0;
  std::vector<EnvironmentEvent> environment_events;
  std::vector<DisturbanceEvent> disturbances;
  ExecutorOptions options;
};

// Fires scripted course edits and impulses on an executor as their
// triggers come due. Poll once before every tick.
class EventScript {
 public:
  EventScript() = default;
  EventScript(std::vector<EnvironmentEvent> env_events, std::vector<DisturbanceEvent> disturbances)
      : env_events_(std::move(env_events)), disturbances_(std::move(disturbances)) {
    env_state_.resize(env_events_.size());
    dist_state_.resize(disturbances_.size());
  }

  // Returns rejections (an impulse that came due while grounded, an edit that
  // fails validation); the executor logs accepted ones itself.
  std::vector<LogEvent> poll(Executor& ex) {
    std::vector<LogEvent> rejected;
    const bool takeoff = ex.consume_takeoff_flag();
    const double now = ex.state().time;
    for (std::size_t i = 0; i < env_events_.size(); ++i) {
      if (!due(env_state_[i], env_events_[i].trigger, ex, takeoff, now)) continue;
      try {
        ex.apply(env_events_[i].update);
      } catch (const Error& e) {
        rejected.push_back({now, "RejectedUpdate", e.what()});
      }
    }
    for (std::size_t i = 0; i < disturbances_.size(); ++i) {
      if (!due(dist_state_[i], disturbances_[i].trigger, ex, takeoff, now)) continue;
      try {
        ex.disturb(disturbances_[i].dv);
      } catch (const Error& e) {
        rejected.push_back({now, "RejectedDisturbance", e.what()});
      }
    }
    return rejected;
  }

 private:
  struct Pending {
    std::optional<double> fire_at;
    bool done = false;
  };

  static bool due(Pending& p, const Trigger& t, const Executor& ex, bool takeoff, double now) {
    if (p.done) return false;
    if (!p.fire_at) {
      if (t.at_time) {
        p.fire_at = *t.at_time;
      } else if (takeoff && t.after_takeoff && *t.after_takeoff == ex.state().jumps) {
        p.fire_at = ex.log().jumps.back().takeoff_time + t.delay;
      }
    }
    if (!p.fire_at || now < *p.fire_at - 1e-12) return false;
    p.done = true;
    return true;
  }

  std::vector<EnvironmentEvent> env_events_;
  std::vector<DisturbanceEvent> disturbances_;
  std::vector<Pending> env_state_;
  std::vector<Pending> dist_state_;
};

inline Executor make_executor(const EpisodeSetup& setup) {
  return Executor(validate(setup.parkour), setup.leg, setup.mppc, setup.solver, setup.gains, setup.noise, setup.seed,
                  setup.x_start, setup.options);
}

/// Runs one scripted episode to completion. Deterministic for a fixed seed.
inline EpisodeLog run_episode(const EpisodeSetup& setup) {
  Executor ex = make_executor(setup);
  EventScript script(setup.environment_events, setup.disturbances);
  std::vector<LogEvent> rejected;
  while (!ex.finished()) {
    for (auto& r : script.poll(ex)) rejected.push_back(std::move(r));
    ex.step();
  }
  EpisodeLog log = ex.take_log();
  for (auto& r : rejected) log.events.push_back(std::move(r));
  std::stable_sort(log.events.begin(), log.events.end(),
                   [](const LogEvent& a, const LogEvent& b) { return a.time < b.time; });
  return log;
}

}  // namespace mppc
