#include "scmpc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scmpc {

void ModelParams::validate() const {
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw ConfigError("mass must be positive", "model.mass");
  }
  if (!std::isfinite(gravity)) {
    throw ConfigError("gravity must be finite", "model.gravity");
  }
  if (n_feet < 1) throw ConfigError("at least one foot required", "model.n_feet");
  if (corner_offsets.empty()) {
    throw ConfigError("foot needs at least one corner", "model.corner_offsets");
  }
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Mat63 contact_map(const Vec3& p_point, const Vec3& p_com) {
  Mat63 a;
  a.topRows<3>().setIdentity();
  a.bottomRows<3>() = skew(p_point - p_com);
  return a;
}

Vec6 disturbance_wrench(std::span<const DisturbanceSpec> disturbances, double t) {
  Vec6 w = Vec6::Zero();
  for (const auto& d : disturbances) {
    if (!d.active_at(t)) continue;
    w.head<3>() += d.force;
    w.tail<3>() += d.lever_arm.cross(d.force);
  }
  return w;
}

Vec6 average_disturbance_wrench(std::span<const DisturbanceSpec> disturbances,
                                double t0, double t1) {
  Vec6 w = Vec6::Zero();
  const double span = t1 - t0;
  if (!(span > 0.0)) return disturbance_wrench(disturbances, t0);
  for (const auto& d : disturbances) {
    const double overlap = std::min(t1, d.t_end) - std::max(t0, d.t_start);
    if (overlap <= 0.0) continue;
    const double frac = overlap / span;
    w.head<3>() += frac * d.force;
    w.tail<3>() += frac * d.lever_arm.cross(d.force);
  }
  return w;
}

namespace {

void check_aligned(std::span<const ContactCorner> corners, std::span<const Vec3> forces) {
  if (corners.size() != forces.size()) {
    std::ostringstream os;
    os << "force list (" << forces.size() << ") does not match corner list ("
       << corners.size() << ")";
    throw ContractViolation(os.str());
  }
}

// Centroidal rate under a fixed external wrench.
std::pair<Vec3, Vec6> rate(const CentroidalState& s, std::span<const ContactCorner> corners,
                           std::span<const Vec3> forces, const Vec6& external,
                           const ModelParams& params) {
  Vec6 h_dot = params.mass * params.gravity_vector() + external;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    if (!corners[i].active) continue;
    h_dot.head<3>() += forces[i];
    h_dot.tail<3>() += (corners[i].position - s.p_com).cross(forces[i]);
  }
  return {s.linear() / params.mass, h_dot};
}

}  // namespace

std::pair<Vec3, Vec6> dynamics_rhs(const CentroidalState& state,
                                   std::span<const ContactCorner> corners,
                                   std::span<const Vec3> forces,
                                   std::span<const DisturbanceSpec> disturbances,
                                   const ModelParams& params, double t) {
  check_aligned(corners, forces);
  return rate(state, corners, forces, disturbance_wrench(disturbances, t), params);
}

std::pair<CentroidalState, std::vector<ContactCorner>> euler_step(
    const CentroidalState& state, std::span<const ContactCorner> corners,
    std::span<const Vec3> forces, const ModelParams& params, double dt) {
  if (!(dt > 0.0)) throw ContractViolation("euler_step: dt must be positive");
  check_aligned(corners, forces);
  const auto [p_dot, h_dot] = rate(state, corners, forces, Vec6::Zero(), params);
  CentroidalState next{state.p_com + dt * p_dot, state.h + dt * h_dot};
  std::vector<ContactCorner> moved(corners.begin(), corners.end());
  for (auto& c : moved) {
    if (!c.active) c.position += dt * c.swing_velocity;
  }
  return {next, std::move(moved)};
}

CentroidalState plant_step(const CentroidalState& state,
                           std::span<const ContactCorner> corners,
                           std::span<const Vec3> forces,
                           std::span<const DisturbanceSpec> disturbances,
                           const ModelParams& params, double dt_sub, double t) {
  if (!(dt_sub > 0.0)) throw ContractViolation("plant_step: dt_sub must be positive");
  check_aligned(corners, forces);
  const Vec6 ext = average_disturbance_wrench(disturbances, t, t + dt_sub);

  auto f = [&](const CentroidalState& s) { return rate(s, corners, forces, ext, params); };
  auto offset = [](const CentroidalState& s, const std::pair<Vec3, Vec6>& k, double a) {
    return CentroidalState{s.p_com + a * k.first, s.h + a * k.second};
  };

  const auto k1 = f(state);
  const auto k2 = f(offset(state, k1, 0.5 * dt_sub));
  const auto k3 = f(offset(state, k2, 0.5 * dt_sub));
  const auto k4 = f(offset(state, k3, dt_sub));

  CentroidalState next;
  next.p_com = state.p_com +
               dt_sub / 6.0 * (k1.first + 2.0 * k2.first + 2.0 * k3.first + k4.first);
  next.h = state.h +
           dt_sub / 6.0 * (k1.second + 2.0 * k2.second + 2.0 * k3.second + k4.second);
  if (!next.finite()) {
    std::ostringstream os;
    os << "plant diverged at t = " << t;
    throw DivergenceError(os.str(), t);
  }
  return next;
}

}  // namespace scmpc
