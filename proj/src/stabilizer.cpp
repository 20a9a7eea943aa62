#include "scmpc/stabilizer.hpp"

#include <cmath>

namespace scmpc {

void GainSet::validate() const {
  if (!((k1.array() > 0.0).all() && (k2.array() > 0.0).all())) {
    throw ConfigError("gain diagonals must be strictly positive", "mpc.gains");
  }
  if (!(adapt_gain > 0.0)) throw ConfigError("adapt_gain must be positive", "mpc.gains.adapt_gain");
}

TransformedState transform(const CentroidalState& state, const ReferenceSample& ref,
                           const GainSet& gains, double mass) {
  if (!(mass > 0.0)) throw ContractViolation("transform: mass must be positive");
  TransformedState ts;
  ts.z1 = state.p_com - ref.p_ref;
  ts.z2 = gains.k1.cwiseProduct(ts.z1) + state.linear() / mass - ref.v_ref;
  ts.eta = state.angular() / mass;
  return ts;
}

CentroidalState inverse_transform(const TransformedState& ts, const ReferenceSample& ref,
                                  const GainSet& gains, double mass) {
  if (!(mass > 0.0)) throw ContractViolation("inverse_transform: mass must be positive");
  CentroidalState s;
  s.p_com = ts.z1 + ref.p_ref;
  s.h.head<3>() = mass * (ts.z2 - gains.k1.cwiseProduct(ts.z1) + ref.v_ref);
  s.h.tail<3>() = mass * ts.eta;
  return s;
}

Vec3 nominal_feedback(const TransformedState& ts, const ReferenceSample& ref,
                      const EstimatorState& est, const GainSet& gains, double gravity) {
  const Vec3 k1sq = gains.k1.cwiseProduct(gains.k1);
  Vec3 u = -(gains.k1 + gains.k2).cwiseProduct(ts.z2) + k1sq.cwiseProduct(ts.z1) -
           est.theta_hat + ref.a_ref;
  u.z() -= gravity;
  return u;
}

EstimatorState adapt_step(const EstimatorState& est, const Vec3& z2, double dt,
                          const GainSet& gains) {
  if (!(dt > 0.0)) throw ContractViolation("adapt_step: dt must be positive");
  return {est.theta_hat + gains.adapt_gain * dt * z2};
}

double stability_residual(const Vec3& z1, const Vec3& z2, const Vec3& nu, const GainSet& gains) {
  return -z1.dot(gains.k1.cwiseProduct(z1)) - z2.dot(gains.k2.cwiseProduct(z2)) + z1.dot(z2) +
         z2.dot(nu);
}

double lyapunov_value(const Vec3& z1, const Vec3& z2, const Vec3& theta_err, const Vec3& eta) {
  return z1.squaredNorm() + z2.squaredNorm() + theta_err.squaredNorm() + eta.squaredNorm();
}

double nu_inequality_residual(const Vec3& z2, const Vec3& eta, const Vec3& p_u,
                              const Vec3& p_theta, const Vec3& p_com, const Vec3& u_n,
                              const Vec3& theta, const Vec3& nu) {
  const Mat3 su = skew(p_u - p_com);
  const Mat3 st = skew(p_theta - p_com);
  const double lhs = (z2 + su.transpose() * eta).dot(nu);
  const double rhs = -eta.dot(su * u_n + st * theta);
  return lhs - rhs;
}

Eigen::Matrix<double, 12, 1> closed_loop_rhs(const Vec3& z1, const Vec3& z2,
                                             const Vec3& theta_err,
                                             [[maybe_unused]] const Vec3& eta,
                                             const ClosedLoopContext& ctx) {
  const auto& g = ctx.gains;
  const Vec3 theta_hat = ctx.theta - theta_err;
  Vec3 u_n = -(g.k1 + g.k2).cwiseProduct(z2) + g.k1.cwiseProduct(g.k1).cwiseProduct(z1) -
             theta_hat + ctx.a_ref;
  u_n.z() -= ctx.gravity;

  Eigen::Matrix<double, 12, 1> d;
  d.segment<3>(0) = -g.k1.cwiseProduct(z1) + z2;
  d.segment<3>(3) = -g.k2.cwiseProduct(z2) + theta_err + ctx.nu;
  d.segment<3>(6) = -g.adapt_gain * z2;
  d.segment<3>(9) = (ctx.p_u - ctx.p_com).cross(u_n + ctx.nu) +
                    (ctx.p_theta - ctx.p_com).cross(ctx.theta);
  return d;
}

}  // namespace scmpc
