#pragma once

#include "scmpc/mpc.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scmpc {

/// Thresholds of the success test used in place of a collision check.
struct SuccessThresholds {
  double z1_max = 0.10;      // m, infinity norm of the CoM error
  double height_max = 0.05;  // m, CoM height error
  double eta_max = 1.0;      // m^2/s, angular momentum per unit mass treated as a fall
};

struct ScenarioConfig {
  std::string name = "scenario";
  ModelParams model;
  GaitParams gait;
  MPCConfig mpc;
  std::vector<DisturbanceSpec> disturbances;
  /// Simulated time; <= 0 uses the plan duration.
  double duration = 0.0;
  std::uint64_t seed = 0;
  int substeps = 10;
  SuccessThresholds thresholds;

  void validate() const;
  double resolved_duration(const ContactPlan& plan) const;
};

/// Controller outcome of one row. `none` marks the terminal row.
enum class TickStatus { converged, max_iter, infeasible, numerical_failure, none };

const char* to_string(TickStatus s);

struct TraceRow {
  double t = 0.0;
  Vec3 p_com = Vec3::Zero();
  Vec3 p_ref = Vec3::Zero();
  Vec6 h = Vec6::Zero();
  Vec3 z1 = Vec3::Zero();
  Vec3 z2 = Vec3::Zero();
  Vec3 eta = Vec3::Zero();
  Vec3 theta_hat = Vec3::Zero();
  Vec3 nu = Vec3::Zero();
  std::vector<Vec3> forces;        // N, per corner, held over the tick
  std::vector<Vec3> feet;          // actual foot centers
  std::vector<Vec3> feet_nominal;  // planned foot centers
  std::vector<bool> foot_active;
  double stab_residual = 0.0;
  double eta_norm = 0.0;
  double kkt = 0.0;
  int solve_iters = 0;
  double solve_ms = 0.0;
  TickStatus status = TickStatus::none;
  /// The contact configuration changes within the next tick.
  bool contact_switch = false;
};

struct Metrics {
  double height_error_mean = 0.0;
  double height_error_std = 0.0;
  double max_z1 = 0.0;
  double max_eta_norm = 0.0;
  double max_contact_deviation = 0.0;
  bool success = false;
  int failure_tick = -1;
  std::string failure_reason;
};

struct SimResult {
  std::string name;
  double dt = 0.0;
  std::vector<TraceRow> trace;
  Metrics metrics;
  bool diverged = false;
  bool infeasible = false;
};

/// Closed loop: measure, adapt theta_hat, solve, hold first-step forces for
/// one period on the RK4 plant with disturbances. Infeasibility and
/// divergence end the run and are recorded, not thrown.
SimResult run_scenario(const ScenarioConfig& cfg);

/// Net disturbance wrench (force; torque about the CoM) at t.
Vec6 disturbance_at(double t, const std::vector<DisturbanceSpec>& specs);

Metrics evaluate_metrics(const std::vector<TraceRow>& trace, const SuccessThresholds& thresholds,
                         bool infeasible = false);

}  // namespace scmpc
