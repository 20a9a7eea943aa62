#pragma once

// Adaptive backstepping quantities for the centroidal model. Everything here
// is mass-normalized: forces are accelerations, momenta are velocities.

#include "scmpc/dynamics.hpp"
#include "scmpc/gait.hpp"

namespace scmpc {

struct TransformedState {
  Vec3 z1 = Vec3::Zero();   // CoM position error
  Vec3 z2 = Vec3::Zero();   // k1 z1 + velocity error
  Vec3 eta = Vec3::Zero();  // angular momentum / mass
};

/// Diagonal feedback gains plus the adaptation gain.
struct GainSet {
  Vec3 k1 = Vec3::Constant(0.1);
  Vec3 k2 = Vec3::Constant(0.5);
  double adapt_gain = 1.0;

  void validate() const;
};

struct EstimatorState {
  Vec3 theta_hat = Vec3::Zero();
};

TransformedState transform(const CentroidalState& state, const ReferenceSample& ref,
                           const GainSet& gains, double mass);

CentroidalState inverse_transform(const TransformedState& ts, const ReferenceSample& ref,
                                  const GainSet& gains, double mass);

/// u_n = -(k1 + k2) z2 + k1^2 z1 - B g - theta_hat + a_ref, per unit mass.
Vec3 nominal_feedback(const TransformedState& ts, const ReferenceSample& ref,
                      const EstimatorState& est, const GainSet& gains,
                      double gravity = kGravity);

/// Forward-Euler step of theta_hat_dot = adapt_gain * z2.
EstimatorState adapt_step(const EstimatorState& est, const Vec3& z2, double dt,
                          const GainSet& gains);

/// -z1'k1 z1 - z2'k2 z2 + z1'z2 + z2'nu: the (z, theta_tilde) part of the
/// Lyapunov derivative under u = u_n + nu.
double stability_residual(const Vec3& z1, const Vec3& z2, const Vec3& nu, const GainSet& gains);

/// |z1|^2 + |z2|^2 + |theta_err|^2 + |eta|^2.
double lyapunov_value(const Vec3& z1, const Vec3& z2, const Vec3& theta_err, const Vec3& eta);

/// LHS - RHS of the condition on nu that makes the angular part of the
/// Lyapunov derivative non-positive; <= 0 certifies it. Needs the true theta.
double nu_inequality_residual(const Vec3& z2, const Vec3& eta, const Vec3& p_u,
                              const Vec3& p_theta, const Vec3& p_com, const Vec3& u_n,
                              const Vec3& theta, const Vec3& nu);

/// Data the closed-loop vector field needs besides (z1, z2, theta_err, eta).
struct ClosedLoopContext {
  Vec3 p_u = Vec3::Zero();
  Vec3 p_theta = Vec3::Zero();
  Vec3 p_com = Vec3::Zero();
  Vec3 a_ref = Vec3::Zero();
  Vec3 theta = Vec3::Zero();  // true disturbance, per unit mass
  Vec3 nu = Vec3::Zero();
  GainSet gains;
  double gravity = kGravity;
};

/// Stacked derivative (z1, z2, theta_err, eta) of the closed loop under
/// u = u_n + nu with the adaptation law; 12 entries.
Eigen::Matrix<double, 12, 1> closed_loop_rhs(const Vec3& z1, const Vec3& z2,
                                             const Vec3& theta_err, const Vec3& eta,
                                             const ClosedLoopContext& ctx);

}  // namespace scmpc
