#include "scmpc/gait.hpp"

#include <algorithm>
#include <cmath>

namespace scmpc {

void GaitParams::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (n_steps < 1) throw ConfigError("n_steps must be at least 1", "gait.n_steps");
  if (!positive(step_duration)) {
    throw ConfigError("step_duration must be positive", "gait.step_duration");
  }
  if (!positive(walk_speed_scale)) {
    throw ConfigError("walk_speed_scale must be positive", "gait.walk_speed_scale");
  }
  if (!(double_support_fraction >= 0.0 && double_support_fraction < 1.0)) {
    throw ConfigError("double_support_fraction must lie in [0, 1)",
                      "gait.double_support_fraction");
  }
  if (!positive(com_height)) throw ConfigError("com_height must be positive", "gait.com_height");
  if (!(initial_stance >= 0.0) || !(final_stance >= 0.0)) {
    throw ConfigError("stance durations must be non-negative", "gait.initial_stance");
  }
  if (!std::isfinite(step_length) || !std::isfinite(step_width) || !(swing_height >= 0.0)) {
    throw ConfigError("step geometry must be finite", "gait.step_length");
  }
}

std::array<double, 3> quintic_hermite(double p0, double v0, double p1, double v1,
                                      double duration, double s) {
  const double d = p1 - p0;
  const double V0 = v0 * duration;
  const double V1 = v1 * duration;
  const double c1 = V0;
  const double c3 = 10.0 * d - 6.0 * V0 - 4.0 * V1;
  const double c4 = -15.0 * d + 8.0 * V0 + 7.0 * V1;
  const double c5 = 6.0 * d - 3.0 * V0 - 3.0 * V1;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double p = p0 + c1 * s + c3 * s3 + c4 * s3 * s + c5 * s3 * s2;
  const double dp = c1 + 3.0 * c3 * s2 + 4.0 * c4 * s3 + 5.0 * c5 * s3 * s;
  const double ddp = 6.0 * c3 * s + 12.0 * c4 * s2 + 20.0 * c5 * s3;
  return {p, dp / duration, ddp / (duration * duration)};
}

namespace {

// Knot slope: average of adjacent secants, zero at local extrema.
double knot_slope(double left_secant, double right_secant) {
  if (left_secant * right_secant <= 0.0) return 0.0;
  return 0.5 * (left_secant + right_secant);
}

}  // namespace

ContactPlan::ContactPlan(const GaitParams& gait, const ModelParams& model)
    : gait_(gait), model_(model) {
  gait_.validate();
  model_.validate();
  if (model_.n_feet != 2) throw ConfigError("the gait planner expects two feet", "model.n_feet");

  initial_feet_ = {Vec3(0.0, 0.5 * gait_.step_width, 0.0),
                   Vec3(0.0, -0.5 * gait_.step_width, 0.0)};

  const double step = gait_.scaled_step_duration();
  const double single = step * (1.0 - gait_.double_support_fraction);
  const double dbl = step * gait_.double_support_fraction;
  const double initial = gait_.initial_stance / gait_.walk_speed_scale;
  const double final_ = gait_.final_stance / gait_.walk_speed_scale;

  std::vector<Vec3> feet = initial_feet_;
  auto midpoint = [&](const std::vector<bool>& active) {
    Vec3 sum = Vec3::Zero();
    int n = 0;
    for (int f = 0; f < 2; ++f) {
      if (active[f]) {
        sum += feet[f];
        ++n;
      }
    }
    return Vec3(sum / n);
  };
  auto push_phase = [&](double t0, double t1, std::vector<bool> active) {
    if (t1 - t0 <= 0.0) return;
    SupportPhase ph{t0, t1, active, midpoint(active)};
    ph.support_midpoint.z() = 0.0;
    phases_.push_back(std::move(ph));
  };

  double t = 0.0;
  push_phase(t, t + initial, {true, true});
  t += initial;
  int swing = 1;  // right foot first
  // Zero step length is a standing plan: same timeline, no lift-off.
  const bool standing = gait_.step_length == 0.0;
  for (int k = 0; k < gait_.n_steps; ++k) {
    if (standing) {
      push_phase(t, t + step, {true, true});
      t += step;
      continue;
    }
    Footstep fs;
    fs.foot = swing;
    fs.from = feet[swing];
    fs.to = feet[swing] + Vec3(gait_.step_length, 0.0, 0.0);
    fs.t_lift = t;
    fs.t_touchdown = t + single;
    std::vector<bool> active = {true, true};
    active[swing] = false;
    push_phase(t, t + single, active);
    t += single;
    feet[swing] = fs.to;
    footsteps_.push_back(fs);
    const bool last = (k + 1 == gait_.n_steps);
    if (!last) {
      push_phase(t, t + dbl, {true, true});
      t += dbl;
    }
    swing = 1 - swing;
  }
  push_phase(t, t + final_, {true, true});
  t += final_;
  duration_ = t;

  // Spline knots: plan start, every phase midpoint, plan end.
  std::vector<std::pair<double, Vec3>> pts;
  pts.emplace_back(0.0, phases_.front().support_midpoint);
  for (const auto& ph : phases_) {
    pts.emplace_back(0.5 * (ph.t_begin + ph.t_end), ph.support_midpoint);
  }
  pts.emplace_back(duration_, phases_.back().support_midpoint);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Knot k{pts[i].first, pts[i].second, Vec3::Zero()};
    k.p.z() = gait_.com_height;
    if (i > 0 && i + 1 < pts.size()) {
      const double dl = pts[i].first - pts[i - 1].first;
      const double dr = pts[i + 1].first - pts[i].first;
      for (int a = 0; a < 2; ++a) {
        const double sl = dl > 0 ? (pts[i].second(a) - pts[i - 1].second(a)) / dl : 0.0;
        const double sr = dr > 0 ? (pts[i + 1].second(a) - pts[i].second(a)) / dr : 0.0;
        k.v(a) = knot_slope(sl, sr);
      }
    }
    if (!knots_.empty() && k.t - knots_.back().t <= 1e-12) {
      knots_.back() = k;
      continue;
    }
    knots_.push_back(k);
  }
}

bool ContactPlan::foot_active(int foot, double t) const {
  for (const auto& fs : footsteps_) {
    if (fs.foot == foot && t >= fs.t_lift && t < fs.t_touchdown) return false;
  }
  return true;
}

std::pair<Vec3, Vec3> ContactPlan::foot_nominal(int foot, double t) const {
  Vec3 pos = initial_feet_[foot];
  for (const auto& fs : footsteps_) {
    if (fs.foot != foot) continue;
    if (t >= fs.t_touchdown) {
      pos = fs.to;
      continue;
    }
    if (t < fs.t_lift) break;
    const double T = fs.t_touchdown - fs.t_lift;
    const double s = (t - fs.t_lift) / T;
    Vec3 p, v;
    for (int a = 0; a < 3; ++a) {
      const auto q = quintic_hermite(fs.from(a), 0.0, fs.to(a), 0.0, T, s);
      p(a) = q[0];
      v(a) = q[1];
    }
    // Swing apex bump: 64 s^3 (1 - s)^3 peaks at 1 for s = 1/2.
    const double u = s * (1.0 - s);
    p.z() += gait_.swing_height * 64.0 * u * u * u;
    v.z() += gait_.swing_height * 64.0 * 3.0 * u * u * (1.0 - 2.0 * s) / T;
    return {p, v};
  }
  return {pos, Vec3::Zero()};
}

std::vector<Vec3> ContactPlan::corners_of(const Vec3& center) const {
  std::vector<Vec3> out;
  out.reserve(model_.corner_offsets.size());
  for (const auto& off : model_.corner_offsets) out.push_back(center + off);
  return out;
}

ContactPlan plan_footsteps(const GaitParams& gait, const ModelParams& model) {
  return ContactPlan(gait, model);
}

ReferenceSample sample_reference(const ContactPlan& plan, double t) {
  ReferenceSample r;
  if (t < 0.0 || t > plan.duration()) {
    r.clamped = true;
    t = std::clamp(t, 0.0, plan.duration());
  }
  const auto& knots = plan.knots();
  auto it = std::upper_bound(knots.begin(), knots.end(), t,
                             [](double v, const ContactPlan::Knot& k) { return v < k.t; });
  if (it == knots.begin()) ++it;
  if (it == knots.end()) --it;
  const auto& k1 = *it;
  const auto& k0 = *(it - 1);
  const double T = k1.t - k0.t;
  const double s = std::clamp((t - k0.t) / T, 0.0, 1.0);
  for (int a = 0; a < 3; ++a) {
    const auto q = quintic_hermite(k0.p(a), k0.v(a), k1.p(a), k1.v(a), T, s);
    r.p_ref(a) = q[0];
    r.v_ref(a) = q[1];
    r.a_ref(a) = q[2];
  }

  const int n_feet = plan.model().n_feet;
  for (int f = 0; f < n_feet; ++f) {
    const bool active = plan.foot_active(f, t);
    const auto [c, v] = plan.foot_nominal(f, t);
    r.foot_active.push_back(active);
    r.foot_centers.push_back(c);
    r.foot_velocities.push_back(v);
    for (const auto& corner : plan.corners_of(c)) {
      r.nominal_contacts.push_back(corner);
      r.contact_flags.push_back(active);
    }
  }
  return r;
}

}  // namespace scmpc
