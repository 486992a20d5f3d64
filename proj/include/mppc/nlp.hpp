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

// Small dense augmented-Lagrangian solver for
//
//   minimize f(u)  s.t.  c(u) = 0,  h(u) <= 0,  lower <= u <= upper
//
// The box stays explicit; every subproblem is a bound-constrained
// minimization solved by projected Newton steps. The Hessian of the
// augmented Lagrangian is obtained by central differences of its analytic
// gradient, which is cheap at the sizes this library deals with (3N <= ~20).

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace mppc::nlp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// `Problem` supplies the objective, both constraint blocks and their
// Jacobians (rows = constraints). Jacobian pointers may be null.
template <class P>
concept Problem = requires(const P& p, const Vector& u, Vector& g, Vector& c, Matrix* J) {
  { p.num_vars() } -> std::convertible_to<int>;
  { p.lower() } -> std::convertible_to<Vector>;
  { p.upper() } -> std::convertible_to<Vector>;
  { p.objective(u, &g) } -> std::convertible_to<double>;
  p.equalities(u, c, J);
  p.inequalities(u, c, J);
};

struct Options {
  double constraint_tolerance = 1e-8;
  double relative_objective_tolerance = 1e-8;
  double stationarity_tolerance = 1e-7;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e8;
  // Past this penalty, a violation above `infeasible_violation` is taken as
  // local infeasibility.
  double infeasible_penalty = 1e4;
  double infeasible_violation = 1e-3;
  int max_outer_iterations = 40;
  int max_inner_iterations = 80;
};

enum class Status { kConverged, kInfeasible, kIterationLimit };

struct Result {
  Status status = Status::kIterationLimit;
  Vector u;
  double objective = 0.0;
  double max_violation = std::numeric_limits<double>::infinity();
  int outer_iterations = 0;
  int inner_iterations = 0;
};

inline double max_violation(const Vector& eq, const Vector& ineq) {
  double v = eq.size() ? eq.cwiseAbs().maxCoeff() : 0.0;
  if (ineq.size()) v = std::max(v, ineq.maxCoeff());
  return std::max(v, 0.0);
}

namespace detail {

inline Vector project(const Vector& u, const Vector& lo, const Vector& hi) { return u.cwiseMax(lo).cwiseMin(hi); }

// Augmented Lagrangian (PHR form for the inequalities) and its gradient.
template <Problem P>
class Merit {
 public:
  Merit(const P& p, const Vector& lambda, const Vector& nu, double mu)
      : p_(p), lambda_(lambda), nu_(nu), mu_(mu) {}

  double operator()(const Vector& u, Vector* grad) const {
    Vector gf(u.size());
    double value = p_.objective(u, grad ? &gf : nullptr);
    Vector c, h;
    Matrix Jc, Jh;
    p_.equalities(u, c, grad ? &Jc : nullptr);
    p_.inequalities(u, h, grad ? &Jh : nullptr);
    value += lambda_.dot(c) + 0.5 * mu_ * c.squaredNorm();
    const Vector shifted = (nu_ + mu_ * h).cwiseMax(0.0);
    value += (shifted.squaredNorm() - nu_.squaredNorm()) / (2.0 * mu_);
    if (grad) {
      *grad = gf;
      if (c.size()) *grad += Jc.transpose() * (lambda_ + mu_ * c);
      if (h.size()) *grad += Jh.transpose() * shifted;
    }
    return value;
  }

 private:
  const P& p_;
  const Vector& lambda_;
  const Vector& nu_;
  double mu_;
};

// Projected Newton (two-metric) on the box. Returns the iteration count.
template <class F>
int minimize_in_box(const F& merit, Vector& u, const Vector& lo, const Vector& hi, double tolerance,
                    int max_iterations) {
  const int n = static_cast<int>(u.size());
  Vector g(n);
  double value = merit(u, &g);
  Matrix H(n, n);
  Vector gp(n), gm(n), up(n);
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Vector pg = u - project(u - g, lo, hi);
    const double pg_norm = pg.lpNorm<Eigen::Infinity>();
    if (pg_norm <= tolerance) break;

    const double eps = std::min(1e-6, pg_norm);
    std::vector<int> free, fixed;
    for (int i = 0; i < n; ++i) {
      const bool at_lo = u[i] <= lo[i] + eps && g[i] > 0.0;
      const bool at_hi = u[i] >= hi[i] - eps && g[i] < 0.0;
      (at_lo || at_hi ? fixed : free).push_back(i);
    }

    for (int i = 0; i < n; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(u[i]));
      up = u;
      up[i] += h;
      merit(up, &gp);
      up[i] = u[i] - h;
      merit(up, &gm);
      H.col(i) = (gp - gm) / (2.0 * h);
    }
    H = 0.5 * (H + H.transpose()).eval();

    Vector d = Vector::Zero(n);
    if (!free.empty()) {
      const int nf = static_cast<int>(free.size());
      Matrix Hf(nf, nf);
      Vector gf(nf);
      for (int a = 0; a < nf; ++a) {
        gf[a] = g[free[a]];
        for (int b = 0; b < nf; ++b) Hf(a, b) = H(free[a], free[b]);
      }
      Eigen::SelfAdjointEigenSolver<Matrix> eig(Hf);
      Vector ev = eig.eigenvalues().cwiseAbs();
      const double floor = 1e-10 * std::max(1.0, ev.maxCoeff());
      ev = ev.cwiseMax(floor);
      const Vector df = -eig.eigenvectors() * ((eig.eigenvectors().transpose() * gf).cwiseQuotient(ev));
      for (int a = 0; a < nf; ++a) d[free[a]] = df[a];
    }
    for (int i : fixed) d[i] = -g[i] / std::max(std::abs(H(i, i)), 1e-10);

    // Backtracking along the projection arc.
    double step = 1.0;
    bool accepted = false;
    Vector candidate(n), gc(n);
    for (int ls = 0; ls < 40; ++ls) {
      candidate = project(u + step * d, lo, hi);
      const double predicted = g.dot(candidate - u);
      const double trial = merit(candidate, &gc);
      if (predicted < 0.0 && trial <= value + 1e-4 * predicted) {
        u = candidate;
        value = trial;
        g = gc;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Fall back to a plain projected gradient step.
      step = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        candidate = project(u - step * g, lo, hi);
        const double predicted = g.dot(candidate - u);
        const double trial = merit(candidate, &gc);
        if (predicted < 0.0 && trial <= value + 1e-4 * predicted) {
          u = candidate;
          value = trial;
          g = gc;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return it;
}

}  // namespace detail

template <Problem P>
Result solve(const P& problem, const Vector& initial, const Options& opt = {}) {
  const Vector lo = problem.lower();
  const Vector hi = problem.upper();
  Result res;
  res.u = detail::project(initial, lo, hi);

  Vector c, h;
  problem.equalities(res.u, c, nullptr);
  problem.inequalities(res.u, h, nullptr);
  Vector lambda = Vector::Zero(c.size());
  Vector nu = Vector::Zero(h.size());
  double mu = opt.initial_penalty;
  double previous_violation = max_violation(c, h);
  double previous_objective = std::numeric_limits<double>::infinity();
  int stalled = 0;

  for (int outer = 0; outer < opt.max_outer_iterations; ++outer) {
    res.outer_iterations = outer + 1;
    const double inner_tolerance = std::max(opt.stationarity_tolerance, 1e-2 / std::pow(10.0, outer));
    detail::Merit<P> merit(problem, lambda, nu, mu);
    res.inner_iterations +=
        detail::minimize_in_box(merit, res.u, lo, hi, inner_tolerance, opt.max_inner_iterations);

    problem.equalities(res.u, c, nullptr);
    problem.inequalities(res.u, h, nullptr);
    const double violation = max_violation(c, h);
    const double objective = problem.objective(res.u, nullptr);
    res.objective = objective;
    res.max_violation = violation;

    const bool objective_settled = std::abs(objective - previous_objective) <=
                                   opt.relative_objective_tolerance * std::max(1.0, std::abs(objective));
    if (violation <= opt.constraint_tolerance && objective_settled &&
        inner_tolerance <= opt.stationarity_tolerance) {
      res.status = Status::kConverged;
      return res;
    }
    previous_objective = objective;
    if (mu >= opt.infeasible_penalty && violation > opt.infeasible_violation) {
      res.status = Status::kInfeasible;
      return res;
    }

    if (violation <= opt.constraint_tolerance || violation <= 0.25 * previous_violation) {
      lambda += mu * c;
      nu = (nu + mu * h).cwiseMax(0.0);
      stalled = 0;
    } else {
      if (mu >= opt.max_penalty) {
        if (++stalled >= 2) {
          res.status = Status::kInfeasible;
          return res;
        }
      }
      mu = std::min(mu * opt.penalty_growth, opt.max_penalty);
    }
    previous_violation = std::min(previous_violation, violation);
  }
  res.status = res.max_violation <= opt.constraint_tolerance ? Status::kConverged : Status::kIterationLimit;
  if (res.status == Status::kIterationLimit && mu >= opt.max_penalty) res.status = Status::kInfeasible;
  return res;
}

}  // namespace mppc::nlp
