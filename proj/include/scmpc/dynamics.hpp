#pragma once

#include "scmpc/types.hpp"

#include <span>
#include <utility>
#include <vector>

namespace scmpc {

/// CoM position and aggregate centroidal momentum (linear; angular about the
/// CoM), world aligned.
struct CentroidalState {
  Vec3 p_com = Vec3::Zero();
  Vec6 h = Vec6::Zero();

  Vec3 linear() const { return h.head<3>(); }
  Vec3 angular() const { return h.tail<3>(); }
  bool finite() const { return p_com.allFinite() && h.allFinite(); }
};

/// One point where a contact force is applied (a foot corner).
struct ContactCorner {
  Vec3 position = Vec3::Zero();
  Vec3 swing_velocity = Vec3::Zero();
  bool active = false;
  Mat3 surface_rotation = Mat3::Identity();
};

enum class DisturbanceKind { constant, impulse, step_change };

/// External force acting on the body over [t_start, t_end). The application
/// point is p_com + lever_arm.
struct DisturbanceSpec {
  Vec3 force = Vec3::Zero();
  Vec3 lever_arm = Vec3::Zero();
  double t_start = 0.0;
  double t_end = 0.0;
  DisturbanceKind kind = DisturbanceKind::constant;

  bool active_at(double t) const { return t >= t_start && t < t_end; }
};

/// Mass, gravity and the rectangular-foot corner layout shared by the plant
/// and the controller.
struct ModelParams {
  double mass = 56.7;
  double gravity = kGravity;
  /// Corner offsets of one foot, expressed in the foot frame.
  std::vector<Vec3> corner_offsets = {
      {0.10, 0.05, 0.0}, {0.10, -0.05, 0.0}, {-0.10, 0.05, 0.0}, {-0.10, -0.05, 0.0}};
  int n_feet = 2;

  Vec6 gravity_vector() const {
    Vec6 g = Vec6::Zero();
    g(2) = gravity;
    return g;
  }
  int corners_per_foot() const { return static_cast<int>(corner_offsets.size()); }
  int n_corners() const { return n_feet * corners_per_foot(); }
  void validate() const;
};

Mat3 skew(const Vec3& v);

/// [I; S(p_point - p_com)]: maps a force at p_point to a centroidal wrench.
Mat63 contact_map(const Vec3& p_point, const Vec3& p_com);

/// Net wrench (force; torque about the CoM) of the disturbances active at t.
Vec6 disturbance_wrench(std::span<const DisturbanceSpec> disturbances, double t);

/// Time average of disturbance_wrench over [t0, t1).
Vec6 average_disturbance_wrench(std::span<const DisturbanceSpec> disturbances,
                                double t0, double t1);

/// Time derivative (p_com_dot, h_dot) of the perturbed centroidal model.
std::pair<Vec3, Vec6> dynamics_rhs(const CentroidalState& state,
                                   std::span<const ContactCorner> corners,
                                   std::span<const Vec3> forces,
                                   std::span<const DisturbanceSpec> disturbances,
                                   const ModelParams& params, double t);

/// One Forward-Euler step of the unperturbed model, including the
/// (1 - active) * swing_velocity corner update used by the predictor.
std::pair<CentroidalState, std::vector<ContactCorner>> euler_step(
    const CentroidalState& state, std::span<const ContactCorner> corners,
    std::span<const Vec3> forces, const ModelParams& params, double dt);

/// One classical RK4 step of the perturbed model under held forces.
/// Disturbances are averaged over [t, t + dt_sub) so short windows deposit
/// their exact impulse. Throws DivergenceError on a non-finite result.
CentroidalState plant_step(const CentroidalState& state,
                           std::span<const ContactCorner> corners,
                           std::span<const Vec3> forces,
                           std::span<const DisturbanceSpec> disturbances,
                           const ModelParams& params, double dt_sub, double t);

}  // namespace scmpc
