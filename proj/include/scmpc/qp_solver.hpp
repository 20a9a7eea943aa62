#pragma once

#include "scmpc/types.hpp"

#include <Eigen/Sparse>

#include <optional>
#include <string>

namespace scmpc {

using SpMat = Eigen::SparseMatrix<double>;

inline constexpr double kInf = 1e30;

enum class SolveStatus { converged, max_iter, infeasible, numerical_failure };

const char* to_string(SolveStatus s);

/// Outcome of a QP or NLP solve. Multiplier signs follow the Lagrangian
/// f + y_eq'c_eq + y_in'c_in + y_bound'x with c_in <= 0, y_in >= 0 and
/// y_bound > 0 (< 0) on an active upper (lower) bound.
struct SolveReport {
  VecX solution;
  VecX y_eq;
  VecX y_in;
  VecX y_bound;
  double kkt_residual = kInf;
  int iterations = 0;
  SolveStatus status = SolveStatus::numerical_failure;
  /// Row of the most violated constraint when status == infeasible (-1 otherwise).
  int violated_row = -1;
  std::string message;
};

/// min 1/2 x'Px + q'x  s.t.  l <= Ax <= u. P holds the full symmetric matrix.
struct QPProblem {
  SpMat P;
  VecX q;
  SpMat A;
  VecX l;
  VecX u;
};

enum class QPMethod { interior_point, admm };

struct QPSettings {
  QPMethod method = QPMethod::interior_point;
  // Interior point.
  int ipm_max_iter = 100;
  double ipm_tol = 1e-9;
  /// Mean complementarity s'z / m at termination; bounds the objective gap,
  /// which must stay below the decreases an outer SQP still needs.
  double ipm_gap_tol = 1e-13;
  double ipm_regularization = 1e-10;
  // Operator splitting.
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_infeasible = 1e-7;
  int max_iter = 20000;
  int check_every = 10;
  int scaling_iters = 10;
  bool adaptive_rho = true;
  bool polish = true;
  double polish_tol = 1e-8;
  int polish_refine_iters = 5;
};

/// Raw operator-splitting result in OSQP conventions (y > 0: upper bound
/// active).
struct QPResult {
  VecX x;
  VecX y;
  SolveStatus status = SolveStatus::numerical_failure;
  int iterations = 0;
  bool polished = false;
  double prim_res = kInf;
  double dual_res = kInf;
  int violated_row = -1;
};

/// Sparse QP solver. The default primal-dual interior-point method
/// (Mehrotra predictor-corrector) is used inside SQP; the operator-splitting
/// (ADMM) method with Ruiz equilibration, adaptive step size, infeasibility
/// detection and active-set polishing is kept as a cross-check.
class QPSolver {
 public:
  explicit QPSolver(QPSettings settings = {}) : settings_(settings) {}

  QPResult solve(const QPProblem& qp, const VecX* x_warm = nullptr,
                 const VecX* y_warm = nullptr) const;

  const QPSettings& settings() const { return settings_; }

 private:
  QPSettings settings_;
};

/// Largest violation of l <= Ax <= u and stationarity residual |Px + q + A'y|.
struct QPResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double sign = 0.0;
};
QPResiduals qp_residuals(const QPProblem& qp, const VecX& x, const VecX& y);

/// Mehrotra predictor-corrector interior point on the quasi-definite
/// augmented system. Used by QPSolver when method == interior_point.
QPResult solve_qp_interior_point(const QPProblem& qp, const QPSettings& settings,
                                 const VecX* x_warm = nullptr);

/// Convenience front end in the natural form
///   min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lo <= x <= hi.
/// Empty matrices / vectors mean "no such constraints".
SolveReport solve_qp(const MatX& H, const VecX& g, const MatX& A_eq, const VecX& b_eq,
                     const MatX& A_in, const VecX& b_in, const VecX& lower = {},
                     const VecX& upper = {}, const QPSettings& settings = {});

}  // namespace scmpc
