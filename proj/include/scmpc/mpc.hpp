#pragma once

// Receding-horizon centroidal MPC with optional Lyapunov stability
// constraints. Decision variables are mass-normalized: corner forces are
// accelerations, momenta are velocities.

#include "scmpc/gait.hpp"
#include "scmpc/nlp_solver.hpp"
#include "scmpc/stabilizer.hpp"

#include <memory>
#include <string>
#include <vector>

namespace scmpc {

enum class StabilityMode { off, full_contraction, norm_bound };

const char* to_string(StabilityMode m);
StabilityMode stability_mode_from_string(const std::string& s);

/// SQP settings for the MPC: the least-squares Hessian is already positive
/// definite on the relevant subspace, so only a tiny proximal term is added.
inline SQPOptions default_solver_options() {
  SQPOptions o;
  o.regularization = 1e-10;
  return o;
}

struct MPCConfig {
  int horizon = 12;
  double dt = 0.1;
  Vec3 weight_com = Vec3::Constant(1000.0);     // Q1 diagonal
  Vec3 weight_eta = Vec3::Constant(100.0);      // Q2 diagonal
  Vec3 weight_contact = Vec3::Constant(100.0);  // Q3 diagonal
  double weight_force_symmetry = 1e-2;
  /// Rate-of-change weight, relative to weight_force_symmetry.
  double force_rate_ratio = 1e-3;
  double weight_swing_velocity = 1e-6;
  GainSet gains;
  double eta_bound = 0.3;
  /// Allowed growth of |eta|^2 per step in the contraction row; keeps the
  /// row regular when eta is at the origin.
  double eta_slack = 1e-6;
  StabilityMode stability_mode = StabilityMode::full_contraction;
  bool first_step_only = true;
  double friction = 0.5;
  double fz_min = 0.0;  // N
  Vec3 contact_lower = Vec3(-0.05, -0.05, 0.0);
  Vec3 contact_upper = Vec3(0.05, 0.05, 0.0);
  double nu_bound = 20.0;
  double eps_stab = 1e-6;
  double swing_velocity_bound = 5.0;
  SQPOptions solver = default_solver_options();

  void validate() const;
  bool stabilized() const { return stability_mode != StabilityMode::off; }
};

/// Index map of the multiple-shooting decision vector.
struct MPCLayout {
  int horizon = 0;
  int n_feet = 0;
  int corners_per_foot = 0;
  int n_stab = 0;

  int n_corners() const { return n_feet * corners_per_foot; }
  int state_dim() const { return 9 + 3 * n_feet; }
  int control_dim() const { return 3 * n_corners() + 3 * n_feet; }
  int state(int k) const { return k * state_dim(); }
  int com(int k) const { return state(k); }
  int vel(int k) const { return state(k) + 3; }
  int eta(int k) const { return state(k) + 6; }
  int foot(int k, int f) const { return state(k) + 9 + 3 * f; }
  int control(int k) const { return (horizon + 1) * state_dim() + k * control_dim(); }
  int force(int k, int c) const { return control(k) + 3 * c; }
  int foot_velocity(int k, int f) const { return control(k) + 3 * n_corners() + 3 * f; }
  int nu(int j) const { return control(horizon) + 3 * j; }
  int size() const { return nu(n_stab); }
  int foot_of(int corner) const { return corner / corners_per_foot; }
};

/// Frozen data of one MPC tick.
struct MPCWindow {
  double t0 = 0.0;
  std::vector<Vec3> p_ref, v_ref, a_ref;              // per knot
  std::vector<std::vector<bool>> foot_active;         // [knot][foot]
  std::vector<std::vector<Vec3>> foot_nominal;        // [knot][foot]
  std::vector<std::vector<Vec3>> foot_nominal_velocity;
  std::vector<Mat3> foot_rotation;                    // per foot
  std::vector<Vec3> corner_offsets;                   // foot frame, one foot
  // Measured initial condition (mass-normalized momenta).
  Vec3 p0 = Vec3::Zero();
  Vec3 v0 = Vec3::Zero();
  Vec3 eta0 = Vec3::Zero();
  std::vector<Vec3> feet0;
  Vec3 theta_hat = Vec3::Zero();
  double gravity = kGravity;
  double mass = 1.0;

  int horizon() const { return static_cast<int>(p_ref.size()) - 1; }
  int n_feet() const { return static_cast<int>(feet0.size()); }
};

/// Sample the plan over the horizon starting at t and attach the measured
/// state. `feet` are the actual foot centers.
MPCWindow make_window(const ContactPlan& plan, double t, const MPCConfig& cfg,
                      const CentroidalState& state, const std::vector<Vec3>& feet,
                      const EstimatorState& est);

/// Linear least-squares cost |M x - target|^2.
struct LeastSquaresCost {
  SpMat M;
  VecX target;

  double value(const VecX& x) const { return (M * x - target).squaredNorm(); }
  VecX gradient(const VecX& x) const { return 2.0 * (M.transpose() * (M * x - target)); }
  SpMat gauss_newton() const { return SpMat(2.0 * (M.transpose() * M)); }
};

LeastSquaresCost build_cost(const MPCWindow& w, const MPCConfig& cfg, const MPCLayout& layout);

enum class RowKind { initial, dynamics, coupling, stability, eta, friction, contact_box };

/// Constraint set of one tick. eq(x) = 0, ineq(x) <= 0, lower <= x <= upper.
/// Box axes with equal lower and upper limits are emitted as equality rows
/// so that interior-point steps keep a strictly feasible interior.
class ConstraintSet {
 public:
  ConstraintSet(const MPCWindow& w, const MPCConfig& cfg, const MPCLayout& layout);

  int n_eq() const { return static_cast<int>(eq_kind_.size()); }
  int n_in() const { return static_cast<int>(in_kind_.size()); }
  VecX eq(const VecX& x) const;
  SpMat eq_jacobian(const VecX& x) const;
  VecX ineq(const VecX& x) const;
  SpMat ineq_jacobian(const VecX& x) const;
  /// Positive semidefinite curvature of the eta-norm rows for multipliers y_in
  /// (the next-knot term only).
  SpMat ineq_curvature(const VecX& x, const VecX& y_in) const;

  const VecX& lower() const { return lower_; }
  const VecX& upper() const { return upper_; }
  RowKind eq_kind(int i) const { return eq_kind_[i]; }
  RowKind in_kind(int i) const { return in_kind_[i]; }

  /// Aggregate-force coupling residual sum(f) - u_n(x_k) - nu_k.
  Vec3 coupling(const VecX& x, int j) const;
  /// u_n evaluated on the predicted state at knot k.
  Vec3 nominal_feedback_at(const VecX& x, int k) const;
  int stab_knot(int j) const { return j; }

 private:
  struct FrictionRow {
    int knot, corner, side;
  };
  struct BoxRow {
    int knot, foot, axis;
    bool upper;
  };

  const MPCWindow* w_;
  const MPCConfig* cfg_;
  MPCLayout L_;
  std::vector<RowKind> eq_kind_;
  std::vector<RowKind> in_kind_;
  std::vector<FrictionRow> friction_;
  std::vector<BoxRow> box_;
  std::vector<BoxRow> pinned_;  // zero-width box axes, kept as equalities
  VecX lower_, upper_;
  double stab_scale_ = 1.0;
  std::vector<int> stab_rows_;
};

/// One assembled optimal control problem. Owns its window so the NLP
/// callbacks stay valid for the object's lifetime.
class MPCProblem {
 public:
  MPCProblem(MPCWindow window, const MPCConfig& cfg);
  MPCProblem(const MPCProblem&) = delete;
  MPCProblem& operator=(const MPCProblem&) = delete;

  const MPCWindow& window() const { return *window_; }
  const MPCConfig& config() const { return cfg_; }
  const MPCLayout& layout() const { return layout_; }
  const LeastSquaresCost& cost() const { return cost_; }
  const ConstraintSet& constraints() const { return *constraints_; }
  const NLProblem& nlp() const { return nlp_; }

  /// Reference states, gravity-balanced symmetric forces, zero nu.
  VecX cold_start() const;
  /// Previous solution advanced by one knot (last knot duplicated), with the
  /// measured state written into knot 0.
  VecX shifted_warm_start(const VecX& previous) const;

 private:
  std::unique_ptr<MPCWindow> window_;
  MPCConfig cfg_;
  MPCLayout layout_;
  LeastSquaresCost cost_;
  std::unique_ptr<ConstraintSet> constraints_;
  NLProblem nlp_;
};

struct MPCSolution {
  SolveReport report;
  SQPTrace trace;
  bool converged() const { return report.status == SolveStatus::converged; }
  VecX x;
  MPCLayout layout;
  /// First-step corner forces, mass-normalized.
  std::vector<Vec3> forces_per_mass;
  Vec3 nu = Vec3::Zero();
  Vec3 u_n = Vec3::Zero();
  std::vector<Vec3> feet_next;
  std::vector<Vec3> predicted_com;
  std::vector<Vec3> predicted_eta;
  double stability_residual = 0.0;
  double eta_norm_next = 0.0;
  double max_friction_violation = 0.0;
  double max_box_violation = 0.0;
  double coupling_residual = 0.0;
  double cost = 0.0;
};

MPCSolution solve(const MPCProblem& problem, const VecX* warm_start = nullptr);

struct ControlCommand {
  std::vector<Vec3> corner_forces;  // N
  Vec3 nu = Vec3::Zero();           // per unit mass
  Vec3 u_n = Vec3::Zero();          // per unit mass
  std::vector<Vec3> feet_next;
};

/// First-step quantities of a solution; forces scaled back to newtons.
ControlCommand extract_control(const MPCSolution& sol, double mass);

}  // namespace scmpc
