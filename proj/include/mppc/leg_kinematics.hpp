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

// Two-link planar leg hanging from a point-mass hip.
//
// Frames: x points in the hop direction, z up. Joint angles are measured
// from +x, counter-clockwise:
//   knee = hip + l1 (cos q1, sin q1)
//   foot = knee + l2 (cos(q1 + q2), sin(q1 + q2))
// A positive knee angle places the knee behind the hip-foot line, i.e. the
// knee trails the hop direction.

#pragma once

#include <algorithm>
#include <cmath>

#include "mppc/common.hpp"

namespace mppc {

struct LegParams {
  double l1 = 0.2;     // upper link (m)
  double l2 = 0.2;     // lower link (m)
  double mass = 2.5;   // lumped hip mass (kg)
  double r_takeoff = 0.34;  // foot-hip distance at take-off (m)
  double r_flight = 0.24;   // foot-hip distance in flight (m)
  double theta_flight = deg2rad(75.0);  // foot->hip line vs ground in flight
  double gravity = kDefaultGravity;
  bool operator==(const LegParams&) const = default;
};

struct JointState {
  double q1 = 0.0;
  double q2 = 0.0;
  double q1d = 0.0;
  double q2d = 0.0;
  bool operator==(const JointState&) const = default;
};

// Shift of the foot (e) and knee (k) between the take-off and the flight
// configuration, plus the flight angle of the lower link against the ground.
struct ConfigOffsets {
  double c_xe = 0.0;
  double c_ze = 0.0;
  double c_xk = 0.0;
  double c_zk = 0.0;
  double alpha_f = 0.0;
};

struct FlightConfig {
  double alpha_f = 0.0;
  JointState joints;
};

inline constexpr int kKneeTrailing = +1;
inline constexpr int kKneeLeading = -1;

inline void validate(const LegParams& p) {
  if (!all_finite({p.l1, p.l2, p.mass, p.r_takeoff, p.r_flight, p.theta_flight, p.gravity})) {
    throw Error(ErrorCode::kInvalidArgument, "leg parameters must be finite");
  }
  if (p.l1 <= 0.0 || p.l2 <= 0.0) throw Error(ErrorCode::kInvalidArgument, "link lengths must be positive");
  if (p.mass <= 0.0) throw Error(ErrorCode::kInvalidArgument, "leg mass must be positive");
  if (p.gravity <= 0.0) throw Error(ErrorCode::kInvalidArgument, "gravity must be positive");
  if (!(p.r_flight > 0.0 && p.r_flight <= p.r_takeoff && p.r_takeoff < p.l1 + p.l2)) {
    throw Error(ErrorCode::kInvalidArgument, "need 0 < r_flight <= r_takeoff < l1 + l2");
  }
  if (!(std::abs(p.l1 - p.l2) < p.r_flight)) {
    throw Error(ErrorCode::kInvalidArgument, "flight extension below the folded-leg radius");
  }
  if (!(p.theta_flight > 0.0 && p.theta_flight < kPi)) {
    throw Error(ErrorCode::kInvalidArgument, "flight angle must lie in (0, pi)");
  }
}

/// Foot position relative to the hip.
inline Vec2 forward_kinematics(const LegParams& p, const JointState& q) {
  const double q12 = q.q1 + q.q2;
  return {p.l1 * std::cos(q.q1) + p.l2 * std::cos(q12), p.l1 * std::sin(q.q1) + p.l2 * std::sin(q12)};
}

/// Knee position relative to the hip.
inline Vec2 knee_position(const LegParams& p, const JointState& q) {
  return {p.l1 * std::cos(q.q1), p.l1 * std::sin(q.q1)};
}

inline JointState inverse_kinematics(const LegParams& p, const Vec2& foot, int knee_sign = kKneeTrailing) {
  const double r2 = foot.squaredNorm();
  const double r = std::sqrt(r2);
  constexpr double kSlack = 1e-12;
  if (!std::isfinite(r) || r > p.l1 + p.l2 + kSlack || r < std::abs(p.l1 - p.l2) - kSlack) {
    throw Error(ErrorCode::kUnreachable, "foot target at radius " + std::to_string(r) + " is outside the annulus");
  }
  const double c2 = std::clamp((r2 - p.l1 * p.l1 - p.l2 * p.l2) / (2.0 * p.l1 * p.l2), -1.0, 1.0);
  JointState q;
  q.q2 = (knee_sign >= 0 ? 1.0 : -1.0) * std::acos(c2);
  q.q1 = std::atan2(foot.y(), foot.x()) - std::atan2(p.l2 * std::sin(q.q2), p.l1 + p.l2 * std::cos(q.q2));
  return q;
}

/// d(foot)/d(q1, q2).
inline Mat2 jacobian(const LegParams& p, const JointState& q) {
  const double s1 = std::sin(q.q1), c1 = std::cos(q.q1);
  const double s12 = std::sin(q.q1 + q.q2), c12 = std::cos(q.q1 + q.q2);
  Mat2 J;
  J << -p.l1 * s1 - p.l2 * s12, -p.l2 * s12,  //
      p.l1 * c1 + p.l2 * c12, p.l2 * c12;
  return J;
}

/// Foot position relative to the hip for a foot->hip line of length `r` at
/// angle `theta` against the ground.
inline Vec2 foot_from_polar(double r, double theta) { return {-r * std::cos(theta), -r * std::sin(theta)}; }

inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// The flight pose and the resulting lower-link angle against the ground,
/// measured so the lower link points from the foot along (-cos a, sin a).
inline FlightConfig flight_config(const LegParams& p) {
  FlightConfig fc;
  fc.joints = inverse_kinematics(p, foot_from_polar(p.r_flight, p.theta_flight), kKneeTrailing);
  fc.alpha_f = wrap_angle(-(fc.joints.q1 + fc.joints.q2));
  return fc;
}

inline ConfigOffsets takeoff_offsets(const LegParams& p, double theta, double alpha_f) {
  ConfigOffsets c;
  c.alpha_f = alpha_f;
  c.c_xe = p.r_takeoff * std::cos(theta) - p.r_flight * std::cos(p.theta_flight);
  c.c_ze = p.r_takeoff * std::sin(theta) - p.r_flight * std::sin(p.theta_flight);
  c.c_xk = c.c_xe - p.l2 * std::cos(alpha_f);
  c.c_zk = c.c_ze + p.l2 * std::sin(alpha_f);
  return c;
}

inline ConfigOffsets takeoff_offsets(const LegParams& p, double theta) {
  return takeoff_offsets(p, theta, flight_config(p).alpha_f);
}

/// Take-off speed that keeps the flat-ground ballistic range of the planned
/// (v, theta) when the leg actually leaves at theta_c.
inline double exertion_velocity(double v, double theta, double theta_c, double tolerance = 1e-9) {
  const double s = std::sin(2.0 * theta);
  const double sc = std::sin(2.0 * theta_c);
  if (sc <= tolerance) {
    throw Error(ErrorCode::kDegenerateAngle, "sin(2 theta_c) = " + std::to_string(sc) + " is not positive");
  }
  if (s <= 0.0) throw Error(ErrorCode::kDegenerateAngle, "planned angle has sin(2 theta) <= 0");
  return std::sqrt(v * v * s / sc);
}

/// Constant ground reaction force over the stroke r_c -> r_takeoff that
/// accelerates the hip mass to v_c, directed along the foot->hip line.
inline Vec2 exertion_force(const LegParams& p, double v_c, double r_c, double theta_c) {
  const double stroke = p.r_takeoff - r_c;
  if (!(stroke > 0.0)) {
    throw Error(ErrorCode::kNonpositiveStroke, "exertion stroke " + std::to_string(stroke) + " m");
  }
  const double magnitude = p.mass * v_c * v_c / (2.0 * stroke);
  return magnitude * Vec2(std::cos(theta_c), std::sin(theta_c));
}

/// tau = J^T lambda with lambda the force acting on the foot.
inline Vec2 joint_torques(const LegParams& p, const JointState& q, const Vec2& lambda) {
  return jacobian(p, q).transpose() * lambda;
}

// ---------------------------------------------------------------------------

// What the impulse planner needs from the leg: the take-off -> flight offsets
// as a function of the take-off angle. The point-mass variant has all offsets
// at zero.
class OffsetModel {
 public:
  static OffsetModel from_leg(const LegParams& p) {
    validate(p);
    OffsetModel m;
    m.r_t_ = p.r_takeoff;
    m.const_xe_ = p.r_flight * std::cos(p.theta_flight);
    m.const_ze_ = p.r_flight * std::sin(p.theta_flight);
    const double alpha_f = flight_config(p).alpha_f;
    m.knee_dx_ = -p.l2 * std::cos(alpha_f);
    m.knee_dz_ = p.l2 * std::sin(alpha_f);
    m.alpha_f_ = alpha_f;
    m.gravity_ = p.gravity;
    return m;
  }

  static OffsetModel point_mass(double gravity = kDefaultGravity) {
    OffsetModel m;
    m.gravity_ = gravity;
    return m;
  }

  double gravity() const { return gravity_; }
  double alpha_f() const { return alpha_f_; }
  bool is_point_mass() const { return r_t_ == 0.0 && knee_dx_ == 0.0 && knee_dz_ == 0.0; }

  ConfigOffsets at(double theta) const {
    ConfigOffsets c;
    c.alpha_f = alpha_f_;
    c.c_xe = r_t_ * std::cos(theta) - const_xe_;
    c.c_ze = r_t_ * std::sin(theta) - const_ze_;
    c.c_xk = c.c_xe + knee_dx_;
    c.c_zk = c.c_ze + knee_dz_;
    return c;
  }
  // Foot and knee offsets share these derivatives.
  double dcx_dtheta(double theta) const { return -r_t_ * std::sin(theta); }
  double dcz_dtheta(double theta) const { return r_t_ * std::cos(theta); }

  // Bounds of the foot offsets over [theta_lo, theta_hi] (both monotone
  // pieces of cos/sin on (0, pi/2)).
  double max_cxe(double theta_lo) const { return r_t_ * std::cos(theta_lo) - const_xe_; }
  double max_cze(double theta_hi) const { return r_t_ * std::sin(theta_hi) - const_ze_; }
  double knee_dx() const { return knee_dx_; }
  double knee_dz() const { return knee_dz_; }

 private:
  double r_t_ = 0.0;
  double const_xe_ = 0.0;
  double const_ze_ = 0.0;
  double knee_dx_ = 0.0;
  double knee_dz_ = 0.0;
  double alpha_f_ = 0.0;
  double gravity_ = kDefaultGravity;
};

}  // namespace mppc
