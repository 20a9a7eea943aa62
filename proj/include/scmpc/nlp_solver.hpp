#pragma once

#include "scmpc/qp_solver.hpp"

#include <functional>
#include <vector>

namespace scmpc {

/// Smooth nonlinear program
///   min f(x)  s.t.  c_eq(x) = 0,  c_in(x) <= 0,  lower <= x <= upper.
struct NLProblem {
  int n = 0;
  std::function<double(const VecX&)> cost;
  std::function<VecX(const VecX&)> cost_gradient;
  /// Optional positive semidefinite approximation of the Lagrangian Hessian
  /// (e.g. Gauss-Newton). When absent a damped BFGS matrix is used.
  std::function<SpMat(const VecX& x, const VecX& y_eq, const VecX& y_in)> hessian;

  int n_eq = 0;
  std::function<VecX(const VecX&)> eq;
  std::function<SpMat(const VecX&)> eq_jacobian;

  int n_in = 0;
  std::function<VecX(const VecX&)> ineq;
  std::function<SpMat(const VecX&)> ineq_jacobian;

  VecX lower;  // empty: unbounded
  VecX upper;
};

struct SQPOptions {
  double tol_kkt = 1e-6;
  int max_iter = 50;
  double regularization = 1e-6;
  double armijo = 1e-4;
  double min_step = 1e-10;
  bool second_order_correction = true;
  QPSettings qp;
};

struct KKTReport {
  /// Lagrangian gradient norm relative to 1 + the largest multiplier.
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double max() const;
  bool pass = false;
};

/// Extra bookkeeping from an SQP run.
struct SQPTrace {
  /// (merit before, merit after) for every accepted step, same penalty.
  std::vector<std::pair<double, double>> merit_steps;
  std::vector<double> step_sizes;
  int qp_iterations = 0;
};

KKTReport check_kkt(const NLProblem& p, const VecX& x, const VecX& y_eq, const VecX& y_in,
                    const VecX& y_bound, double tol);

/// Convenience overload reading the point and multipliers from a report.
KKTReport check_kkt(const NLProblem& p, const SolveReport& rep, double tol);

/// Sequential quadratic programming with an l1 merit line search.
/// `y_eq_warm` / `y_in_warm` optionally seed the multipliers.
SolveReport solve_nlp(const NLProblem& p, const VecX& warm_start, const SQPOptions& opts = {},
                      SQPTrace* trace = nullptr, const VecX* y_eq_warm = nullptr,
                      const VecX* y_in_warm = nullptr);

/// Central finite-difference Jacobian of f at x.
MatX finite_difference_jacobian(const std::function<VecX(const VecX&)>& f, const VecX& x,
                                double step = 1e-6);

/// max_ij |J_analytic - J_fd| / max(1, |J_fd|).
double jacobian_relative_error(const std::function<VecX(const VecX&)>& f, const MatX& analytic,
                               const VecX& x, double step = 1e-6);

}  // namespace scmpc
