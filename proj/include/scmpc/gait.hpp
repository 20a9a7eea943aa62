#pragma once

#include "scmpc/dynamics.hpp"

#include <array>
#include <vector>

namespace scmpc {

struct GaitParams {
  double step_length = 0.1;
  double step_width = 0.2;
  /// Nominal duration of one step (single + double support), before speed scaling.
  double step_duration = 1.0;
  double double_support_fraction = 0.3;
  int n_steps = 10;
  double com_height = 0.53;
  /// Durations are divided by this factor; 0.7 gives the slower walk.
  double walk_speed_scale = 1.0;
  /// Double support before the first lift-off and after the last touchdown.
  double initial_stance = 1.0;
  double final_stance = 1.0;
  double swing_height = 0.05;

  void validate() const;
  double scaled_step_duration() const { return step_duration / walk_speed_scale; }
};

/// Foot index convention: 0 = left (+y), 1 = right (-y).
struct Footstep {
  int foot = 0;
  Vec3 from = Vec3::Zero();
  Vec3 to = Vec3::Zero();
  double t_lift = 0.0;
  double t_touchdown = 0.0;
};

/// Interval of constant contact configuration.
struct SupportPhase {
  double t_begin = 0.0;
  double t_end = 0.0;
  std::vector<bool> foot_active;
  Vec3 support_midpoint = Vec3::Zero();
};

/// Nominal CoM reference and contact schedule at one instant.
struct ReferenceSample {
  Vec3 p_ref = Vec3::Zero();
  Vec3 v_ref = Vec3::Zero();
  Vec3 a_ref = Vec3::Zero();
  std::vector<Vec3> nominal_contacts;   // per corner
  std::vector<bool> contact_flags;      // per corner
  std::vector<Vec3> foot_centers;       // nominal, per foot
  std::vector<Vec3> foot_velocities;    // nominal, per foot
  std::vector<bool> foot_active;
  /// Requested time was outside the plan and got clamped.
  bool clamped = false;
};

/// Immutable footstep plan with the CoM spline knots derived from it.
class ContactPlan {
 public:
  ContactPlan(const GaitParams& gait, const ModelParams& model);

  const GaitParams& gait() const { return gait_; }
  const ModelParams& model() const { return model_; }
  const std::vector<Footstep>& footsteps() const { return footsteps_; }
  const std::vector<SupportPhase>& phases() const { return phases_; }
  const std::vector<Vec3>& initial_feet() const { return initial_feet_; }
  double duration() const { return duration_; }

  bool foot_active(int foot, double t) const;
  /// Nominal foot center and its velocity at t (minimum-jerk during swing).
  std::pair<Vec3, Vec3> foot_nominal(int foot, double t) const;
  /// Corner positions of a foot whose center is `center`.
  std::vector<Vec3> corners_of(const Vec3& center) const;

  struct Knot {
    double t;
    Vec3 p;
    Vec3 v;
  };
  const std::vector<Knot>& knots() const { return knots_; }

 private:
  GaitParams gait_;
  ModelParams model_;
  std::vector<Vec3> initial_feet_;
  std::vector<Footstep> footsteps_;
  std::vector<SupportPhase> phases_;
  std::vector<Knot> knots_;
  double duration_ = 0.0;
};

ContactPlan plan_footsteps(const GaitParams& gait, const ModelParams& model);

ReferenceSample sample_reference(const ContactPlan& plan, double t);

/// Quintic Hermite segment with zero end accelerations; returns (p, v, a) at
/// normalized time s in [0, 1] over a segment of length `duration`.
std::array<double, 3> quintic_hermite(double p0, double v0, double p1, double v1,
                                      double duration, double s);

}  // namespace scmpc
