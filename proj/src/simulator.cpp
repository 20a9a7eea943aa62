#include "scmpc/simulator.hpp"

#include <chrono>
#include <cmath>

namespace scmpc {

namespace {

TickStatus tick_status(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return TickStatus::converged;
    case SolveStatus::max_iter: return TickStatus::max_iter;
    case SolveStatus::infeasible: return TickStatus::infeasible;
    case SolveStatus::numerical_failure: return TickStatus::numerical_failure;
  }
  return TickStatus::none;
}

bool row_finite(const TraceRow& r) { return r.p_com.allFinite() && r.h.allFinite(); }

}  // namespace

const char* to_string(TickStatus s) {
  switch (s) {
    case TickStatus::converged: return "converged";
    case TickStatus::max_iter: return "max_iter";
    case TickStatus::infeasible: return "infeasible";
    case TickStatus::numerical_failure: return "numerical_failure";
    case TickStatus::none: return "none";
  }
  return "?";
}

void ScenarioConfig::validate() const {
  model.validate();
  gait.validate();
  mpc.validate();
  if (substeps < 1) throw ConfigError("substeps must be at least 1", "sim.substeps");
  if (!(thresholds.z1_max > 0.0)) throw ConfigError("must be positive", "sim.thresholds.z1_max");
  if (!(thresholds.height_max > 0.0))
    throw ConfigError("must be positive", "sim.thresholds.height_max");
  if (!(thresholds.eta_max > 0.0)) throw ConfigError("must be positive", "sim.thresholds.eta_max");
  for (const auto& d : disturbances) {
    if (!(d.force.allFinite() && d.lever_arm.allFinite()))
      throw ConfigError("disturbance must be finite", "disturbances");
    if (!(d.t_end > d.t_start)) throw ConfigError("t_end must exceed t_start", "disturbances.t_end");
  }
}

double ScenarioConfig::resolved_duration(const ContactPlan& plan) const {
  return duration > 0.0 ? duration : plan.duration();
}

Vec6 disturbance_at(double t, const std::vector<DisturbanceSpec>& specs) {
  return disturbance_wrench(specs, t);
}

SimResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const ContactPlan plan = plan_footsteps(cfg.gait, cfg.model);
  const ModelParams& model = cfg.model;
  const double dt = cfg.mpc.dt;
  const int n_ticks = static_cast<int>(std::llround(cfg.resolved_duration(plan) / dt));

  SimResult res;
  res.name = cfg.name;
  res.dt = dt;

  const ReferenceSample ref0 = sample_reference(plan, 0.0);
  CentroidalState state;
  state.p_com = ref0.p_ref;
  state.h.head<3>() = model.mass * ref0.v_ref;
  std::vector<Vec3> feet = plan.initial_feet();
  EstimatorState est;
  VecX previous;
  const int cpf = model.corners_per_foot();

  for (int tick = 0; tick <= n_ticks; ++tick) {
    const double t = tick * dt;
    const ReferenceSample ref = sample_reference(plan, t);
    TraceRow row;
    row.t = t;
    row.p_com = state.p_com;
    row.p_ref = ref.p_ref;
    row.h = state.h;
    row.feet = feet;
    row.feet_nominal = ref.foot_centers;
    row.foot_active = ref.foot_active;
    row.forces.assign(model.n_corners(), Vec3::Zero());
    if (!state.finite()) {
      res.trace.push_back(row);
      res.diverged = true;
      break;
    }
    const TransformedState ts = transform(state, ref, cfg.mpc.gains, model.mass);
    row.z1 = ts.z1;
    row.z2 = ts.z2;
    row.eta = ts.eta;
    row.eta_norm = ts.eta.norm();
    if (tick > 0) est = adapt_step(est, ts.z2, dt, cfg.mpc.gains);
    row.theta_hat = est.theta_hat;
    if (tick == n_ticks) {
      res.trace.push_back(row);
      break;
    }

    const auto start = std::chrono::steady_clock::now();
    const MPCProblem problem(make_window(plan, t, cfg.mpc, state, feet, est), cfg.mpc);
    const MPCSolution sol = solve(problem, previous.size() ? &previous : nullptr);
    const auto stop = std::chrono::steady_clock::now();
    row.solve_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    row.solve_iters = sol.report.iterations;
    row.kkt = sol.report.kkt_residual;
    row.status = tick_status(sol.report.status);
    row.stab_residual = sol.stability_residual;
    row.nu = sol.nu;
    const ReferenceSample ref_next = sample_reference(plan, t + dt);
    row.contact_switch = ref_next.foot_active != ref.foot_active;
    if (sol.report.status == SolveStatus::infeasible ||
        sol.report.status == SolveStatus::numerical_failure || !sol.x.allFinite()) {
      res.trace.push_back(row);
      res.infeasible = true;
      break;
    }
    const ControlCommand cmd = extract_control(sol, model.mass);
    row.forces = cmd.corner_forces;
    res.trace.push_back(row);
    previous = sol.x;

    // Hold the forces over the period; swing feet travel linearly to the
    // predicted knot-1 positions.
    std::vector<ContactCorner> corners(model.n_corners());
    for (int c = 0; c < model.n_corners(); ++c) {
      const int f = c / cpf;
      corners[c].active = ref.foot_active[f];
      corners[c].swing_velocity = (cmd.feet_next[f] - feet[f]) / dt;
    }
    const double h = dt / cfg.substeps;
    try {
      for (int s = 0; s < cfg.substeps; ++s) {
        for (int c = 0; c < model.n_corners(); ++c)
          corners[c].position =
              feet[c / cpf] + (s * h) * corners[c].swing_velocity + model.corner_offsets[c % cpf];
        state = plant_step(state, corners, cmd.corner_forces, cfg.disturbances, model, h, t + s * h);
      }
    } catch (const DivergenceError&) {
      state.p_com.setConstant(std::nan(""));
    }
    for (int f = 0; f < model.n_feet; ++f) feet[f] = cmd.feet_next[f];
  }
  res.metrics = evaluate_metrics(res.trace, cfg.thresholds, res.infeasible);
  return res;
}

Metrics evaluate_metrics(const std::vector<TraceRow>& trace, const SuccessThresholds& thr,
                         bool infeasible) {
  if (trace.empty()) throw ContractViolation("evaluate_metrics: empty trace");
  Metrics m;
  m.success = true;
  auto fail = [&](int tick, const std::string& why) {
    if (m.success) {
      m.success = false;
      m.failure_tick = tick;
      m.failure_reason = why;
    }
  };
  double sum = 0.0, sum_sq = 0.0;
  int n = 0;
  for (int i = 0; i < static_cast<int>(trace.size()); ++i) {
    const TraceRow& r = trace[i];
    if (!row_finite(r)) {
      fail(i, "divergence");
      break;
    }
    const Vec3 z1 = r.p_com - r.p_ref;
    const double e = std::abs(z1.z());
    sum += e;
    sum_sq += e * e;
    ++n;
    m.max_z1 = std::max(m.max_z1, z1.cwiseAbs().maxCoeff());
    m.max_eta_norm = std::max(m.max_eta_norm, r.eta.norm());
    // Landed feet only: in swing the nominal is a path, not a contact.
    for (std::size_t f = 0; f < r.feet.size() && f < r.feet_nominal.size(); ++f)
      if (f < r.foot_active.size() && r.foot_active[f])
        m.max_contact_deviation = std::max(m.max_contact_deviation, (r.feet[f] - r.feet_nominal[f]).norm());
    if (r.status == TickStatus::infeasible || r.status == TickStatus::numerical_failure)
      fail(i, "infeasible");
    if (z1.cwiseAbs().maxCoeff() > thr.z1_max) fail(i, "tracking");
    if (e > thr.height_max) fail(i, "height");
    if (r.eta.norm() > thr.eta_max) fail(i, "angular momentum");
  }
  if (infeasible) fail(static_cast<int>(trace.size()) - 1, "infeasible");
  m.height_error_mean = sum / std::max(1, n);
  m.height_error_std =
      std::sqrt(std::max(0.0, sum_sq / std::max(1, n) - m.height_error_mean * m.height_error_mean));
  return m;
}

}  // namespace scmpc
