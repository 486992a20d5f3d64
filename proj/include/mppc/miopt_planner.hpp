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

// Minimum-flight-time impulse planner.
//
// A plan is N ballistic jumps, each parameterized by its air-time t, take-off
// speed v and take-off angle theta. The foot lands at
//
//   x[n] = x[n-1] + c_xe(theta) + v cos(theta) t
//   z[n] = z[n-1] + c_ze(theta) + v sin(theta) t - g t^2 / 2
//
// and the binary passage variables (is x[n] past the front / back of obstacle
// k) are what turn the height profile into a smooth constraint. Because every
// jump moves forward, the binaries of one jump collapse into a single choice:
// the landing interval. Branch-and-bound enumerates non-decreasing interval
// sequences; every leaf is a smooth NLP solved by nlp::solve.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mppc/common.hpp"
#include "mppc/env_model.hpp"
#include "mppc/leg_kinematics.hpp"
#include "mppc/nlp.hpp"

namespace mppc {

struct Limits {
  double t_min = 0.1;
  double t_max = 2.0;
  double v_min = 0.5;
  double v_max = 3.5;
  double theta_min = deg2rad(45.0);
  double theta_max = deg2rad(85.0);
  bool operator==(const Limits&) const = default;
};

inline void validate(const Limits& l) {
  if (!all_finite({l.t_min, l.t_max, l.v_min, l.v_max, l.theta_min, l.theta_max})) {
    throw Error(ErrorCode::kInvalidArgument, "limits must be finite");
  }
  if (!(0.0 < l.t_min && l.t_min < l.t_max)) throw Error(ErrorCode::kInvalidArgument, "need 0 < t_min < t_max");
  if (!(0.0 < l.v_min && l.v_min < l.v_max)) throw Error(ErrorCode::kInvalidArgument, "need 0 < v_min < v_max");
  // theta_max < pi/2 is what guarantees forward progress.
  if (!(0.0 < l.theta_min && l.theta_min < l.theta_max && l.theta_max < 0.5 * kPi)) {
    throw Error(ErrorCode::kInvalidArgument, "need 0 < theta_min < theta_max < pi/2");
  }
}

struct DecisionVars {
  std::vector<double> t;
  std::vector<double> v;
  std::vector<double> theta;

  std::size_t size() const { return t.size(); }

  // Interleaved layout [t0, v0, theta0, t1, ...] used by the NLP.
  nlp::Vector pack() const {
    nlp::Vector u(3 * static_cast<Eigen::Index>(size()));
    for (std::size_t n = 0; n < size(); ++n) {
      u[3 * n] = t[n];
      u[3 * n + 1] = v[n];
      u[3 * n + 2] = theta[n];
    }
    return u;
  }
  static DecisionVars unpack(const nlp::Vector& u) {
    DecisionVars d;
    const auto n_jumps = static_cast<std::size_t>(u.size() / 3);
    for (std::size_t n = 0; n < n_jumps; ++n) {
      d.t.push_back(u[3 * n]);
      d.v.push_back(u[3 * n + 1]);
      d.theta.push_back(u[3 * n + 2]);
    }
    return d;
  }
};

// delta_a[n][k] / delta_b[n][k]: landing of jump n (1-based in the math,
// row n-1 here) lies past the front / back of obstacle k.
struct BinaryAssignment {
  std::vector<std::vector<std::uint8_t>> delta_a;
  std::vector<std::vector<std::uint8_t>> delta_b;
  bool operator==(const BinaryAssignment&) const = default;
};

struct JumpSpec {
  double t = 0.0;
  double v = 0.0;
  double theta = 0.0;
  Vec2 takeoff = Vec2::Zero();
  Vec2 landing = Vec2::Zero();
  LandingInterval segment;
};

struct SolverStats {
  long nlp_iterations = 0;
  long nodes_expanded = 0;
  long leaves_solved = 0;
  double setup_seconds = 0.0;
  double solve_seconds = 0.0;
  bool node_limit_hit = false;
};

struct Plan {
  std::vector<JumpSpec> jumps;
  double total_flight_time = 0.0;
  BinaryAssignment assignment;
  SolverStats stats;

  DecisionVars vars() const {
    DecisionVars d;
    for (const auto& j : jumps) {
      d.t.push_back(j.t);
      d.v.push_back(j.v);
      d.theta.push_back(j.theta);
    }
    return d;
  }
};

struct SolverConfig {
  double constraint_tolerance = 1e-6;
  double relative_optimality_tolerance = 1e-4;
  int max_nlp_iterations = 40;  // outer augmented-Lagrangian iterations
  long max_nodes = 20000;
  double penalty_growth = 10.0;
};

enum class PlanStatus { kSolved, kInfeasible, kIterationLimit, kNodeLimit };

inline std::string_view to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::kSolved: return "Solved";
    case PlanStatus::kInfeasible: return "Infeasible";
    case PlanStatus::kIterationLimit: return "IterationLimit";
    case PlanStatus::kNodeLimit: return "NodeLimit";
  }
  return "Unknown";
}

struct PlanOutcome {
  PlanStatus status = PlanStatus::kInfeasible;
  std::optional<Plan> plan;
  std::string message;
  SolverStats stats;

  bool ok() const { return status == PlanStatus::kSolved && plan.has_value(); }
};

// Everything that stays fixed while solving for one horizon.
struct JumpProblem {
  ValidatedParkour env;
  OffsetModel model;
  Limits limits;
  double x_s = 0.0;
  double z_s = 0.0;
  double x_t = 0.0;
};

// ---------------------------------------------------------------------------
// Ballistic building blocks.

inline Vec2 velocity_components(double v, double theta) { return {v * std::cos(theta), v * std::sin(theta)}; }

/// Landing points x[0..N], z[0..N] with x[0] = start.
inline std::vector<Vec2> rollout(const OffsetModel& model, const Vec2& start, const DecisionVars& vars) {
  std::vector<Vec2> points{start};
  const double g = model.gravity();
  for (std::size_t n = 0; n < vars.size(); ++n) {
    const auto c = model.at(vars.theta[n]);
    const Vec2 vel = velocity_components(vars.v[n], vars.theta[n]);
    const double t = vars.t[n];
    const Vec2& prev = points.back();
    points.emplace_back(prev.x() + c.c_xe + vel.x() * t, prev.y() + c.c_ze + vel.y() * t - 0.5 * g * t * t);
  }
  return points;
}

struct ClearanceHeights {
  double z_ae = 0.0;  // foot height over the obstacle front
  double z_bk = 0.0;  // knee height over the obstacle back
  double t_a = 0.0;
  double t_b = 0.0;
};

/// Foot height at x = A and knee height at x = B along the flight of a jump
/// that takes off from `takeoff`.
inline ClearanceHeights clearance_heights(const OffsetModel& model, const Vec2& takeoff, double v, double theta,
                                          const Obstacle& obstacle) {
  const Vec2 vel = velocity_components(v, theta);
  if (!(vel.x() > 0.0)) throw Error(ErrorCode::kNoForwardProgress, "horizontal take-off velocity is not positive");
  const auto c = model.at(theta);
  const double g = model.gravity();
  ClearanceHeights h;
  h.t_a = (obstacle.A - takeoff.x() - c.c_xe) / vel.x();
  h.z_ae = takeoff.y() + c.c_ze + vel.y() * h.t_a - 0.5 * g * h.t_a * h.t_a;
  h.t_b = (obstacle.B - takeoff.x() - c.c_xk) / vel.x();
  h.z_bk = takeoff.y() + c.c_zk + vel.y() * h.t_b - 0.5 * g * h.t_b * h.t_b;
  return h;
}

namespace detail {

// Landing points and their derivatives with respect to the packed variables.
struct Trajectory {
  nlp::Vector x, z;   // N + 1
  nlp::Matrix dx, dz;  // (N + 1) x 3N
};

inline Trajectory rollout_with_jacobian(const OffsetModel& model, double x_s, double z_s, const nlp::Vector& u,
                                        bool with_jacobian) {
  const int N = static_cast<int>(u.size() / 3);
  const double g = model.gravity();
  Trajectory tr;
  tr.x.resize(N + 1);
  tr.z.resize(N + 1);
  tr.x[0] = x_s;
  tr.z[0] = z_s;
  if (with_jacobian) {
    tr.dx = nlp::Matrix::Zero(N + 1, 3 * N);
    tr.dz = nlp::Matrix::Zero(N + 1, 3 * N);
  }
  for (int n = 0; n < N; ++n) {
    const double t = u[3 * n], v = u[3 * n + 1], th = u[3 * n + 2];
    const double ct = std::cos(th), st = std::sin(th);
    const auto c = model.at(th);
    tr.x[n + 1] = tr.x[n] + c.c_xe + v * ct * t;
    tr.z[n + 1] = tr.z[n] + c.c_ze + v * st * t - 0.5 * g * t * t;
    if (with_jacobian) {
      tr.dx.row(n + 1) = tr.dx.row(n);
      tr.dz.row(n + 1) = tr.dz.row(n);
      tr.dx(n + 1, 3 * n) += v * ct;
      tr.dx(n + 1, 3 * n + 1) += ct * t;
      tr.dx(n + 1, 3 * n + 2) += model.dcx_dtheta(th) - v * st * t;
      tr.dz(n + 1, 3 * n) += v * st - g * t;
      tr.dz(n + 1, 3 * n + 1) += st * t;
      tr.dz(n + 1, 3 * n + 2) += model.dcz_dtheta(th) + v * ct * t;
    }
  }
  return tr;
}

// Height of the foot (knee = false) or knee over x = edge during jump n
// (0-based), with its gradient row.
inline double edge_height(const OffsetModel& model, const Trajectory& tr, const nlp::Vector& u, int n, double edge,
                          bool knee, Eigen::Ref<Eigen::RowVectorXd> grad) {
  const double g = model.gravity();
  const double v = u[3 * n + 1], th = u[3 * n + 2];
  const double ct = std::cos(th), st = std::sin(th);
  const auto c = model.at(th);
  const double cx = knee ? c.c_xk : c.c_xe;
  const double cz = knee ? c.c_zk : c.c_ze;
  const double vx = v * ct, vz = v * st;
  const double tau = (edge - tr.x[n] - cx) / vx;
  const double height = tr.z[n] + cz + vz * tau - 0.5 * g * tau * tau;
  if (grad.size()) {
    const double slope = vz - g * tau;  // d height / d tau
    // tau depends on earlier jumps through x[n] and on this jump's v, theta.
    grad = tr.dz.row(n) + slope * (-tr.dx.row(n) / vx);
    const double dtau_dv = -tau * ct / vx;
    const double dtau_dth = -model.dcx_dtheta(th) / vx + tau * v * st / vx;
    grad[3 * n + 1] += tau * st + slope * dtau_dv;
    grad[3 * n + 2] += model.dcz_dtheta(th) + tau * v * ct + slope * dtau_dth;
  }
  return height;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Constraint residuals in the literal block form. Equality blocks (d, o2)
// are signed; every other block is "<= 0 means satisfied". The two extra
// blocks make explicit what the solution must also satisfy: a descending
// foot at landing and non-decreasing landing positions.

struct Residuals {
  nlp::Vector d, o1, o2, o3, a, r, descent, progress;
  nlp::Matrix J_d, J_o1, J_o2, J_o3, J_a, J_r, J_descent, J_progress;

  static constexpr const char* kBlockNames[] = {"d", "o1", "o2", "o3", "a", "r", "descent", "progress"};

  const nlp::Vector& block(int i) const {
    const nlp::Vector* blocks[] = {&d, &o1, &o2, &o3, &a, &r, &descent, &progress};
    return *blocks[i];
  }
  const nlp::Matrix& jacobian(int i) const {
    const nlp::Matrix* blocks[] = {&J_d, &J_o1, &J_o2, &J_o3, &J_a, &J_r, &J_descent, &J_progress};
    return *blocks[i];
  }
  static bool is_equality(int i) { return i == 0 || i == 2; }

  double block_violation(int i) const {
    const auto& b = block(i);
    if (b.size() == 0) return 0.0;
    return is_equality(i) ? b.cwiseAbs().maxCoeff() : std::max(0.0, b.maxCoeff());
  }
  double max_violation() const {
    double v = 0.0;
    for (int i = 0; i < 8; ++i) v = std::max(v, block_violation(i));
    return v;
  }
};

/// Binary passage variables implied by landing positions. Row 0 is the start
/// (closed-top rule: standing on an edge counts as past it).
inline std::vector<std::vector<std::uint8_t>> start_binaries(const ValidatedParkour& env, double x_s, bool back) {
  std::vector<std::uint8_t> row;
  for (const auto& o : env.obstacles()) row.push_back((back ? x_s > o.B : x_s >= o.A) ? 1 : 0);
  return {row};
}

inline BinaryAssignment assignment_from_segments(const ValidatedParkour& env,
                                                 const std::vector<LandingInterval>& segments) {
  BinaryAssignment asg;
  for (const auto& s : segments) {
    const double mid = 0.5 * (s.lo + s.hi);
    std::vector<std::uint8_t> ra, rb;
    for (const auto& o : env.obstacles()) {
      ra.push_back(mid > o.A ? 1 : 0);
      rb.push_back(mid > o.B ? 1 : 0);
    }
    asg.delta_a.push_back(std::move(ra));
    asg.delta_b.push_back(std::move(rb));
  }
  return asg;
}

inline Residuals constraint_residuals(const JumpProblem& pb, const DecisionVars& vars, const BinaryAssignment& asg,
                                      bool with_jacobian = false) {
  const int N = static_cast<int>(vars.size());
  const auto& obstacles = pb.env.obstacles();
  const auto& areas = pb.env.areas();
  const int K = static_cast<int>(obstacles.size());
  const int M = static_cast<int>(areas.size());
  if (static_cast<int>(asg.delta_a.size()) != N || static_cast<int>(asg.delta_b.size()) != N) {
    throw Error(ErrorCode::kInvalidArgument, "assignment rows do not match the number of jumps");
  }
  const nlp::Vector u = vars.pack();
  const auto tr = detail::rollout_with_jacobian(pb.model, pb.x_s, pb.z_s, u, with_jacobian);
  const double g = pb.model.gravity();
  const double Mh = pb.env->margin_h, Mv = pb.env->margin_v;
  const auto a0 = start_binaries(pb.env, pb.x_s, false)[0];
  const auto b0 = start_binaries(pb.env, pb.x_s, true)[0];

  Residuals res;
  const int nv = 3 * N;
  auto init = [&](nlp::Vector& v, nlp::Matrix& J, int rows) {
    v = nlp::Vector::Zero(rows);
    if (with_jacobian) J = nlp::Matrix::Zero(rows, nv);
  };
  init(res.d, res.J_d, 1);
  init(res.o1, res.J_o1, 4 * N * K);
  init(res.o2, res.J_o2, N);
  init(res.o3, res.J_o3, 2 * N * K);
  init(res.a, res.J_a, 2 * N * K);
  init(res.r, res.J_r, N * M);
  init(res.descent, res.J_descent, N);
  init(res.progress, res.J_progress, std::max(0, N - 1));

  res.d[0] = pb.x_t - tr.x[N];
  if (with_jacobian) res.J_d.row(0) = -tr.dx.row(N);

  Eigen::RowVectorXd grad(with_jacobian ? nv : 0);
  for (int n = 0; n < N; ++n) {
    const double x = tr.x[n + 1];
    double height = 0.0;
    for (int k = 0; k < K; ++k) {
      const auto& o = obstacles[k];
      const double da = asg.delta_a[n][k], db = asg.delta_b[n][k];
      const double da_prev = n == 0 ? a0[k] : asg.delta_a[n - 1][k];
      const double db_prev = n == 0 ? b0[k] : asg.delta_b[n - 1][k];
      const int i1 = 4 * (n * K + k);
      res.o1[i1] = da * (o.A - x);
      res.o1[i1 + 1] = (1.0 - da) * (x - o.A);
      res.o1[i1 + 2] = db * (o.B - x);
      res.o1[i1 + 3] = (1.0 - db) * (x - o.B);
      height += o.H * (da - db);

      const int i3 = 2 * (n * K + k);
      res.o3[i3] = 0.5 * Mh - std::abs(x - o.A);
      res.o3[i3 + 1] = 0.5 * Mh - std::abs(x - o.B);

      const double za = detail::edge_height(pb.model, tr, u, n, o.A, false, grad);
      res.a[i3] = (o.H + Mv - za) * (da - da_prev);
      if (with_jacobian) res.J_a.row(i3) = -grad * (da - da_prev);
      const double zb = detail::edge_height(pb.model, tr, u, n, o.B, true, grad);
      res.a[i3 + 1] = (o.H + Mv - zb) * (db - db_prev);
      if (with_jacobian) res.J_a.row(i3 + 1) = -grad * (db - db_prev);

      if (with_jacobian) {
        const auto dx = tr.dx.row(n + 1);
        res.J_o1.row(i1) = -da * dx;
        res.J_o1.row(i1 + 1) = (1.0 - da) * dx;
        res.J_o1.row(i1 + 2) = -db * dx;
        res.J_o1.row(i1 + 3) = (1.0 - db) * dx;
        res.J_o3.row(i3) = -(x >= o.A ? 1.0 : -1.0) * dx;
        res.J_o3.row(i3 + 1) = -(x >= o.B ? 1.0 : -1.0) * dx;
      }
    }
    res.o2[n] = tr.z[n + 1] - height;
    if (with_jacobian) res.J_o2.row(n) = tr.dz.row(n + 1);

    for (int m = 0; m < M; ++m) {
      const auto& ra = areas[m];
      const double mid = 0.5 * (ra.a + ra.b);
      res.r[n * M + m] = 0.5 * (ra.b - ra.a) - std::abs(x - mid);
      if (with_jacobian) res.J_r.row(n * M + m) = -(x >= mid ? 1.0 : -1.0) * tr.dx.row(n + 1);
    }

    const double v = vars.v[n], th = vars.theta[n], t = vars.t[n];
    res.descent[n] = v * std::sin(th) - g * t;
    if (with_jacobian) {
      res.J_descent(n, 3 * n) = -g;
      res.J_descent(n, 3 * n + 1) = std::sin(th);
      res.J_descent(n, 3 * n + 2) = v * std::cos(th);
    }
    if (n > 0) {
      res.progress[n - 1] = tr.x[n] - tr.x[n + 1];
      if (with_jacobian) res.J_progress.row(n - 1) = tr.dx.row(n) - tr.dx.row(n + 1);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Initial guess: flat course, every jump at theta_min with a common speed.

inline DecisionVars initial_guess(int N, double x_s, double x_t, const Limits& limits,
                                  const OffsetModel& model = OffsetModel::point_mass()) {
  DecisionVars d;
  if (N <= 0) return d;
  const double g = model.gravity();
  const double th = limits.theta_min;
  const double per_jump = (x_t - x_s - N * model.at(th).c_xe) / N;
  double v = per_jump > 0.0 ? std::sqrt(per_jump * g / std::sin(2.0 * th)) : limits.v_min;
  v = std::clamp(v, limits.v_min, limits.v_max);
  const double t = 2.0 * v * std::sin(th) / g;
  d.t.assign(N, t);
  d.v.assign(N, v);
  d.theta.assign(N, th);
  return d;
}

namespace detail {

// One clearance requirement of the leaf problem: the foot over a front or the
// knee over a back, during jump n.
struct Crossing {
  int jump = 0;
  double edge = 0.0;
  double height = 0.0;  // H + M_v
  bool knee = false;
};

inline std::vector<Crossing> crossings_for(const JumpProblem& pb, const std::vector<LandingInterval>& segments) {
  std::vector<Crossing> out;
  const auto asg = assignment_from_segments(pb.env, segments);
  const auto a0 = start_binaries(pb.env, pb.x_s, false)[0];
  const auto b0 = start_binaries(pb.env, pb.x_s, true)[0];
  const double Mv = pb.env->margin_v;
  for (std::size_t n = 0; n < segments.size(); ++n) {
    for (std::size_t k = 0; k < pb.env.obstacles().size(); ++k) {
      const auto& o = pb.env.obstacles()[k];
      const int da_prev = n == 0 ? a0[k] : asg.delta_a[n - 1][k];
      const int db_prev = n == 0 ? b0[k] : asg.delta_b[n - 1][k];
      if (asg.delta_a[n][k] && !da_prev) out.push_back({static_cast<int>(n), o.A, o.H + Mv, false});
      if (asg.delta_b[n][k] && !db_prev) out.push_back({static_cast<int>(n), o.B, o.H + Mv, true});
    }
  }
  return out;
}

// Smooth leaf problem: binaries replaced by the chosen landing intervals.
class LeafProblem {
 public:
  LeafProblem(const JumpProblem& pb, const std::vector<LandingInterval>& segments)
      : pb_(pb), segments_(segments), crossings_(crossings_for(pb, segments)) {
    N_ = static_cast<int>(segments.size());
  }

  int num_vars() const { return 3 * N_; }
  nlp::Vector lower() const {
    nlp::Vector lo(3 * N_);
    for (int n = 0; n < N_; ++n) lo.segment<3>(3 * n) << pb_.limits.t_min, pb_.limits.v_min, pb_.limits.theta_min;
    return lo;
  }
  nlp::Vector upper() const {
    nlp::Vector hi(3 * N_);
    for (int n = 0; n < N_; ++n) hi.segment<3>(3 * n) << pb_.limits.t_max, pb_.limits.v_max, pb_.limits.theta_max;
    return hi;
  }

  double objective(const nlp::Vector& u, nlp::Vector* grad) const {
    double sum = 0.0;
    if (grad) grad->setZero(u.size());
    for (int n = 0; n < N_; ++n) {
      sum += u[3 * n];
      if (grad) (*grad)[3 * n] = 1.0;
    }
    return sum;
  }

  void equalities(const nlp::Vector& u, nlp::Vector& c, nlp::Matrix* J) const {
    const auto tr = rollout_with_jacobian(pb_.model, pb_.x_s, pb_.z_s, u, J != nullptr);
    c.resize(N_ + 1);
    c[0] = tr.x[N_] - pb_.x_t;
    for (int n = 0; n < N_; ++n) c[n + 1] = tr.z[n + 1] - segments_[n].z;
    if (J) {
      J->resize(N_ + 1, 3 * N_);
      J->row(0) = tr.dx.row(N_);
      for (int n = 0; n < N_; ++n) J->row(n + 1) = tr.dz.row(n + 1);
    }
  }

  int num_inequalities() const { return 2 * N_ + static_cast<int>(crossings_.size()) + N_ + (N_ - 1); }

  void inequalities(const nlp::Vector& u, nlp::Vector& h, nlp::Matrix* J) const {
    const auto tr = rollout_with_jacobian(pb_.model, pb_.x_s, pb_.z_s, u, J != nullptr);
    const double g = pb_.model.gravity();
    h.resize(num_inequalities());
    if (J) J->setZero(num_inequalities(), 3 * N_);
    int row = 0;
    for (int n = 0; n < N_; ++n) {
      h[row] = segments_[n].lo - tr.x[n + 1];
      if (J) J->row(row) = -tr.dx.row(n + 1);
      ++row;
      h[row] = tr.x[n + 1] - segments_[n].hi;
      if (J) J->row(row) = tr.dx.row(n + 1);
      ++row;
    }
    Eigen::RowVectorXd grad(J ? 3 * N_ : 0);
    for (const auto& cr : crossings_) {
      const double z = edge_height(pb_.model, tr, u, cr.jump, cr.edge, cr.knee, grad);
      h[row] = cr.height - z;
      if (J) J->row(row) = -grad;
      ++row;
    }
    for (int n = 0; n < N_; ++n) {
      const double t = u[3 * n], v = u[3 * n + 1], th = u[3 * n + 2];
      h[row] = v * std::sin(th) - g * t;
      if (J) {
        (*J)(row, 3 * n) = -g;
        (*J)(row, 3 * n + 1) = std::sin(th);
        (*J)(row, 3 * n + 2) = v * std::cos(th);
      }
      ++row;
    }
    for (int n = 1; n < N_; ++n) {
      h[row] = tr.x[n] - tr.x[n + 1];
      if (J) J->row(row) = tr.dx.row(n) - tr.dx.row(n + 1);
      ++row;
    }
  }

  const std::vector<Crossing>& crossings() const { return crossings_; }

 private:
  const JumpProblem& pb_;
  std::vector<LandingInterval> segments_;
  std::vector<Crossing> crossings_;
  int N_ = 0;
};

// Fastest single jump between two foot positions at a fixed take-off angle,
// or nullopt if the angle cannot produce a valid descending landing there.
struct PointJump {
  double t = 0.0;
  double v = 0.0;
  double theta = 0.0;
};

inline std::optional<PointJump> jump_to_point(const OffsetModel& model, const Limits& lim, const Vec2& from,
                                              const Vec2& to, double theta) {
  const double g = model.gravity();
  const auto c = model.at(theta);
  const double dx = to.x() - from.x() - c.c_xe;
  const double dz = to.y() - from.y() - c.c_ze;
  if (dx <= 0.0) return std::nullopt;
  const double t2 = 2.0 * (dx * std::tan(theta) - dz) / g;
  if (t2 <= 0.0) return std::nullopt;
  const double t = std::sqrt(t2);
  const double v = dx / (t * std::cos(theta));
  if (t < lim.t_min || t > lim.t_max || v < lim.v_min || v > lim.v_max) return std::nullopt;
  if (v * std::sin(theta) - g * t > 0.0) return std::nullopt;
  return PointJump{t, v, theta};
}

inline std::optional<PointJump> best_point_jump(const JumpProblem& pb, const Vec2& from, const Vec2& to,
                                                const std::vector<Crossing>& crossings, int jump) {
  constexpr int kSamples = 32;
  std::optional<PointJump> best;
  const double g = pb.model.gravity();
  for (int i = 0; i <= kSamples; ++i) {
    const double th = pb.limits.theta_min + (pb.limits.theta_max - pb.limits.theta_min) * i / kSamples;
    const auto pj = jump_to_point(pb.model, pb.limits, from, to, th);
    if (!pj) continue;
    bool clear = true;
    const auto c = pb.model.at(th);
    const Vec2 vel = velocity_components(pj->v, th);
    for (const auto& cr : crossings) {
      if (cr.jump != jump) continue;
      const double cx = cr.knee ? c.c_xk : c.c_xe;
      const double cz = cr.knee ? c.c_zk : c.c_ze;
      const double tau = (cr.edge - from.x() - cx) / vel.x();
      if (from.y() + cz + vel.y() * tau - 0.5 * g * tau * tau < cr.height) {
        clear = false;
        break;
      }
    }
    if (clear && (!best || pj->t < best->t)) best = pj;
  }
  return best;
}

// Landing-point guess: pick per-jump landing candidates (spread along
// each interval) by dynamic programming over the cheap point-to-point
// estimate, then turn the chain into decision variables.
inline std::optional<DecisionVars> segment_guess(const JumpProblem& pb, const std::vector<LandingInterval>& segments,
                                                 const std::vector<Crossing>& crossings) {
  const int N = static_cast<int>(segments.size());
  struct Node {
    Vec2 point;
    double cost = std::numeric_limits<double>::infinity();
    int parent = -1;
    PointJump jump;
  };
  std::vector<std::vector<Node>> layers(N + 1);
  layers[0].push_back({Vec2(pb.x_s, pb.z_s), 0.0, -1, {}});
  for (int n = 0; n < N; ++n) {
    const auto& s = segments[n];
    std::vector<double> xs;
    if (n == N - 1) {
      xs = {pb.x_t};
    } else {
      // Ends plus interior points every ~0.1 m: the flight time is concave
      // in the split point, so the leaf solve only finds the global optimum
      // when started in the right basin.
      const double inset = std::min(1e-3, 0.25 * (s.hi - s.lo));
      const double lo = s.lo + inset, hi = s.hi - inset;
      const int pieces = std::clamp(static_cast<int>(std::ceil((hi - lo) / 0.1)), 2, 12);
      for (int i = 0; i <= pieces; ++i) xs.push_back(lo + (hi - lo) * i / pieces);
      // The other basin boundary is the farthest reachable point.
      const auto c = pb.model.at(pb.limits.theta_min);
      const Vec2 vel = velocity_components(pb.limits.v_max, pb.limits.theta_min);
      const double g = pb.model.gravity();
      for (const auto& prev : layers[n]) {
        const double dz = s.z - prev.point.y() - c.c_ze;
        const double disc = vel.y() * vel.y() - 2.0 * g * dz;
        if (disc < 0.0) continue;
        const double reach = prev.point.x() + c.c_xe + vel.x() * (vel.y() + std::sqrt(disc)) / g - 1e-6;
        if (reach > lo && reach < hi) xs.push_back(reach);
      }
    }
    for (double x : xs) {
      Node node;
      node.point = Vec2(x, s.z);
      for (int p = 0; p < static_cast<int>(layers[n].size()); ++p) {
        const auto& prev = layers[n][p];
        if (!std::isfinite(prev.cost)) continue;
        const auto pj = best_point_jump(pb, prev.point, node.point, crossings, n);
        if (pj && prev.cost + pj->t < node.cost) {
          node.cost = prev.cost + pj->t;
          node.parent = p;
          node.jump = *pj;
        }
      }
      layers[n + 1].push_back(node);
    }
  }
  int best = -1;
  for (int i = 0; i < static_cast<int>(layers[N].size()); ++i) {
    if (std::isfinite(layers[N][i].cost) && (best < 0 || layers[N][i].cost < layers[N][best].cost)) best = i;
  }
  if (best < 0) return std::nullopt;
  DecisionVars d;
  d.t.resize(N);
  d.v.resize(N);
  d.theta.resize(N);
  for (int n = N, idx = best; n > 0; --n) {
    const auto& node = layers[n][idx];
    d.t[n - 1] = node.jump.t;
    d.v[n - 1] = node.jump.v;
    d.theta[n - 1] = node.jump.theta;
    idx = node.parent;
  }
  return d;
}

inline Plan make_plan(const JumpProblem& pb, const std::vector<LandingInterval>& segments, const DecisionVars& vars) {
  Plan plan;
  const auto points = rollout(pb.model, Vec2(pb.x_s, pb.z_s), vars);
  for (std::size_t n = 0; n < vars.size(); ++n) {
    JumpSpec j;
    j.t = vars.t[n];
    j.v = vars.v[n];
    j.theta = vars.theta[n];
    j.takeoff = points[n];
    j.landing = points[n + 1];
    j.segment = segments[n];
    plan.jumps.push_back(j);
    plan.total_flight_time += j.t;
  }
  plan.assignment = assignment_from_segments(pb.env, segments);
  return plan;
}

}  // namespace detail

/// Independent feasibility check of a finished plan against every residual
/// block.
inline bool certify(const JumpProblem& pb, const Plan& plan, double tolerance, double* worst = nullptr) {
  const auto res = constraint_residuals(pb, plan.vars(), plan.assignment);
  if (worst) *worst = res.max_violation();
  return res.max_violation() <= tolerance;
}

/// Continuous relaxation at one branch-and-bound leaf: landing intervals fixed
/// per jump (segments.back() must contain x_t).
inline PlanOutcome solve_assignment(const JumpProblem& pb, const std::vector<LandingInterval>& segments,
                                    const std::optional<DecisionVars>& guess, const SolverConfig& config) {
  PlanOutcome out;
  const int N = static_cast<int>(segments.size());
  if (N == 0) {
    out.status = PlanStatus::kInfeasible;
    out.message = "empty assignment";
    return out;
  }
  detail::LeafProblem leaf(pb, segments);
  nlp::Options opt;
  opt.constraint_tolerance = 1e-2 * config.constraint_tolerance;
  opt.penalty_growth = config.penalty_growth;
  opt.max_outer_iterations = config.max_nlp_iterations;

  std::vector<DecisionVars> starts;
  if (auto sg = detail::segment_guess(pb, segments, leaf.crossings())) starts.push_back(*sg);
  if (guess && static_cast<int>(guess->size()) == N) starts.push_back(*guess);
  starts.push_back(initial_guess(N, pb.x_s, pb.x_t, pb.limits, pb.model));

  bool any_limit = false;
  long iterations = 0;
  std::optional<Plan> best;
  for (const auto& start : starts) {
    const auto res = nlp::solve(leaf, start.pack(), opt);
    iterations += res.inner_iterations;
    if (res.status == nlp::Status::kIterationLimit) any_limit = true;
    if (res.status != nlp::Status::kConverged) continue;
    Plan plan = detail::make_plan(pb, segments, DecisionVars::unpack(res.u));
    if (!certify(pb, plan, config.constraint_tolerance)) continue;
    if (!best || plan.total_flight_time < best->total_flight_time) best = std::move(plan);
    // The landing-point guess lands in the right basin almost always; the
    // remaining starts are only fallbacks.
    break;
  }
  if (best) {
    best->stats.nlp_iterations = iterations;
    out.status = PlanStatus::kSolved;
    out.plan = std::move(best);
  } else {
    out.status = any_limit ? PlanStatus::kIterationLimit : PlanStatus::kInfeasible;
    out.message = any_limit ? "NLP iteration limit" : "no feasible point for this assignment";
  }
  return out;
}

namespace detail {

inline int obstacle_landings(const Plan& p) {
  int n = 0;
  for (const auto& j : p.jumps) n += j.segment.z > 0.0 ? 1 : 0;
  return n;
}

// Admissible bounds used to prune the interval tree.
struct Bounds {
  double vx_max = 0.0;       // v_max cos(theta_min)
  double reach = 0.0;        // max horizontal foot travel of one jump
  double cxe_max = 0.0;
  double rise_max = 0.0;     // max foot/knee height gain over the take-off height
  double t_min = 0.0;

  static Bounds from(const JumpProblem& pb) {
    Bounds b;
    const auto& l = pb.limits;
    const double g = pb.model.gravity();
    b.vx_max = l.v_max * std::cos(l.theta_min);
    b.cxe_max = pb.model.max_cxe(l.theta_min);
    b.reach = b.cxe_max + b.vx_max * l.t_max;
    const double vz = l.v_max * std::sin(l.theta_max);
    const double cz = pb.model.max_cze(l.theta_max);
    b.rise_max = std::max(cz, cz + pb.model.knee_dz()) + vz * vz / (2.0 * g);
    b.t_min = l.t_min;
    return b;
  }

  double jump_lb(double gap) const { return std::max(t_min, (gap - cxe_max) / vx_max); }
  double remaining_lb(double gap, int jumps) const {
    if (jumps <= 0) return 0.0;
    return std::max(jumps * t_min, (gap - jumps * cxe_max) / vx_max);
  }
};

}  // namespace detail

/// Branch-and-bound over landing-interval assignments for a fixed number of
/// jumps N.
inline PlanOutcome plan_jumps(const JumpProblem& pb, int N, const SolverConfig& config = {}) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  PlanOutcome out;
  validate(pb.limits);
  if (N == 0) {
    if (std::abs(pb.x_t - pb.x_s) <= config.constraint_tolerance) {
      out.status = PlanStatus::kSolved;
      out.plan = Plan{};
      out.plan->assignment = {};
    } else {
      out.status = PlanStatus::kInfeasible;
      out.message = "zero jumps cannot reach the target";
    }
    return out;
  }
  if (N < 0) throw Error(ErrorCode::kInvalidArgument, "negative number of jumps");
  if (!(pb.x_t > pb.x_s)) {
    out.status = PlanStatus::kInfeasible;
    out.message = "target is not ahead of the start";
    return out;
  }

  const auto intervals = landing_intervals(pb.env, pb.x_s, pb.x_t);
  int final_idx = -1;
  for (int i = 0; i < static_cast<int>(intervals.size()); ++i) {
    if (intervals[i].lo <= pb.x_t + 1e-12 && intervals[i].hi >= pb.x_t - 1e-12) final_idx = i;
  }
  if (final_idx < 0) {
    out.status = PlanStatus::kInfeasible;
    out.message = "target position is not a permitted landing point";
    return out;
  }
  const auto bounds = detail::Bounds::from(pb);
  const auto& obstacles = pb.env.obstacles();

  // Feasibility screen for one jump taking off somewhere in
  // [prev_lo, prev_hi] at height prev_z into interval j.
  auto jump_possible = [&](double prev_lo, double prev_hi, double prev_z, int j) {
    const auto& I = intervals[j];
    if (I.hi <= prev_lo) return false;
    const double gap = std::max(0.0, I.lo - prev_hi);
    if (gap > bounds.reach) return false;
    if (I.z > prev_z + bounds.rise_max) return false;
    for (const auto& o : obstacles) {
      const bool crossed = o.B > prev_hi && o.A < I.lo;
      if (crossed && o.H + pb.env->margin_v > prev_z + bounds.rise_max) return false;
    }
    return true;
  };

  SolverStats stats;
  std::optional<Plan> best;
  std::vector<int> best_seq;
  const double rel = config.relative_optimality_tolerance;
  bool any_limit = false;
  const auto setup_end = Clock::now();
  stats.setup_seconds = std::chrono::duration<double>(setup_end - t0).count();

  auto better = [&](const Plan& cand, const std::vector<int>& seq) {
    if (!best) return true;
    const double a = cand.total_flight_time, b = best->total_flight_time;
    if (std::abs(a - b) > rel * std::max(a, b)) return a < b;
    const int la = detail::obstacle_landings(cand), lb = detail::obstacle_landings(*best);
    if (la != lb) return la < lb;
    return std::lexicographical_compare(seq.begin(), seq.end(), best_seq.begin(), best_seq.end());
  };

  std::vector<int> seq;
  // Depth-first, children in order of their lower bound.
  auto recurse = [&](auto&& self, double cost_so_far, double prev_lo, double prev_hi, double prev_z,
                     int prev_idx) -> void {
    if (stats.nodes_expanded >= config.max_nodes) {
      stats.node_limit_hit = true;
      return;
    }
    ++stats.nodes_expanded;
    const int depth = static_cast<int>(seq.size());
    const int remaining_after = N - depth - 1;
    struct Child {
      int idx;
      double lb;
      double step_lb;
    };
    std::vector<Child> children;
    const int first = std::max(prev_idx, 0);
    for (int j = first; j <= final_idx; ++j) {
      if (remaining_after == 0 && j != final_idx) continue;
      if (!jump_possible(prev_lo, prev_hi, prev_z, j)) continue;
      const auto& I = intervals[j];
      const double step_lb = bounds.jump_lb(std::max(0.0, I.lo - prev_hi));
      const double rest = bounds.remaining_lb(std::max(0.0, pb.x_t - I.hi), remaining_after);
      if (remaining_after > 0 && pb.x_t - I.hi > remaining_after * bounds.reach) continue;
      children.push_back({j, cost_so_far + step_lb + rest, step_lb});
    }
    std::stable_sort(children.begin(), children.end(), [](const Child& a, const Child& b) { return a.lb < b.lb; });
    for (const auto& ch : children) {
      if (best && ch.lb > best->total_flight_time * (1.0 + rel)) break;
      seq.push_back(ch.idx);
      if (remaining_after == 0) {
        ++stats.nodes_expanded;
        ++stats.leaves_solved;
        std::vector<LandingInterval> segments;
        for (int i : seq) segments.push_back(intervals[i]);
        auto leaf = solve_assignment(pb, segments, std::nullopt, config);
        if (leaf.plan) stats.nlp_iterations += leaf.plan->stats.nlp_iterations;
        if (leaf.status == PlanStatus::kIterationLimit) any_limit = true;
        if (leaf.ok() && better(*leaf.plan, seq)) {
          best = std::move(leaf.plan);
          best_seq = seq;
        }
      } else {
        const auto& I = intervals[ch.idx];
        self(self, cost_so_far + ch.step_lb, I.lo, I.hi, I.z, ch.idx);
      }
      seq.pop_back();
      if (stats.node_limit_hit) return;
    }
  };
  recurse(recurse, 0.0, pb.x_s, pb.x_s, pb.z_s, 0);

  stats.solve_seconds = std::chrono::duration<double>(Clock::now() - setup_end).count();
  out.stats = stats;
  if (best) {
    best->stats = stats;
    out.status = PlanStatus::kSolved;
    out.plan = std::move(best);
    return out;
  }
  if (stats.node_limit_hit) {
    out.status = PlanStatus::kNodeLimit;
    out.message = "branch-and-bound node limit reached";
  } else {
    out.status = any_limit ? PlanStatus::kIterationLimit : PlanStatus::kInfeasible;
    out.message = any_limit ? "NLP iteration limit in every candidate leaf" : "no landing assignment is feasible";
  }
  out.plan.reset();
  return out;
}

}  // namespace mppc
