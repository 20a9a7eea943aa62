#include "scmpc/mpc.hpp"

#include <algorithm>
#include <cmath>

namespace scmpc {

namespace {

using Triplet = Eigen::Triplet<double>;

void add_block(std::vector<Triplet>& t, int row, int col, const Mat3& m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (m(i, j) != 0.0) t.emplace_back(row + i, col + j, m(i, j));
}

void add_diag(std::vector<Triplet>& t, int row, int col, const Vec3& d) {
  for (int i = 0; i < 3; ++i)
    if (d(i) != 0.0) t.emplace_back(row + i, col + i, d(i));
}

void add_row(std::vector<Triplet>& t, int row, int col, const Vec3& v) {
  for (int i = 0; i < 3; ++i)
    if (v(i) != 0.0) t.emplace_back(row, col + i, v(i));
}

Vec3 seg(const VecX& x, int i) { return x.segment<3>(i); }

// Smoothed norm sqrt(q + d^2) of a squared norm q. The eta rows compare two
// such values; the sets match the squared form while the gradient stays
// O(1) near the origin.
constexpr double kEtaSmoothing2 = 1e-6;
double smooth_norm(double q) { return std::sqrt(q + kEtaSmoothing2); }

SpMat from_triplets(int rows, int cols, const std::vector<Triplet>& t) {
  SpMat m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

int stab_count(const MPCConfig& cfg) {
  if (!cfg.stabilized()) return 0;
  return cfg.first_step_only ? 1 : cfg.horizon;
}

}  // namespace

const char* to_string(StabilityMode m) {
  switch (m) {
    case StabilityMode::off: return "off";
    case StabilityMode::full_contraction: return "on";
    case StabilityMode::norm_bound: return "norm-bound";
  }
  return "?";
}

StabilityMode stability_mode_from_string(const std::string& s) {
  if (s == "off") return StabilityMode::off;
  if (s == "on" || s == "full_contraction") return StabilityMode::full_contraction;
  if (s == "norm-bound" || s == "norm_bound") return StabilityMode::norm_bound;
  throw ConfigError("unknown stability mode '" + s + "'", "mpc.stability");
}

void MPCConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be at least 1", "mpc.horizon");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive", "mpc.dt");
  if (!((weight_com.array() > 0.0).all())) throw ConfigError("Q1 must be positive", "mpc.weight_com");
  if (!((weight_eta.array() > 0.0).all())) throw ConfigError("Q2 must be positive", "mpc.weight_eta");
  if (!((weight_contact.array() > 0.0).all()))
    throw ConfigError("Q3 must be positive", "mpc.weight_contact");
  if (!(weight_force_symmetry >= 0.0) || !(force_rate_ratio >= 0.0))
    throw ConfigError("force weights must be non-negative", "mpc.weight_force_symmetry");
  gains.validate();
  if (!(eta_bound > 0.0)) throw ConfigError("eta_bound must be positive", "mpc.eta_bound");
  if (!(eta_slack >= 0.0)) throw ConfigError("eta_slack must be non-negative", "mpc.eta_slack");
  if (!(friction > 0.0)) throw ConfigError("friction must be positive", "mpc.friction");
  if (!(fz_min >= 0.0)) throw ConfigError("fz_min must be non-negative", "mpc.fz_min");
  if (!((contact_lower.array() <= contact_upper.array()).all()))
    throw ConfigError("contact box lower exceeds upper", "mpc.contact_lower");
  if (!(nu_bound > 0.0)) throw ConfigError("nu_bound must be positive", "mpc.nu_bound");
  if (!(eps_stab >= 0.0)) throw ConfigError("eps_stab must be non-negative", "mpc.eps_stab");
  if (!(swing_velocity_bound > 0.0))
    throw ConfigError("swing velocity bound must be positive", "mpc.swing_velocity_bound");
}

MPCWindow make_window(const ContactPlan& plan, double t, const MPCConfig& cfg,
                      const CentroidalState& state, const std::vector<Vec3>& feet,
                      const EstimatorState& est) {
  const ModelParams& model = plan.model();
  if (static_cast<int>(feet.size()) != model.n_feet)
    throw ContractViolation("make_window: feet size does not match model");
  MPCWindow w;
  w.t0 = t;
  w.mass = model.mass;
  w.gravity = model.gravity;
  w.corner_offsets = model.corner_offsets;
  w.foot_rotation.assign(model.n_feet, Mat3::Identity());
  for (int k = 0; k <= cfg.horizon; ++k) {
    const ReferenceSample r = sample_reference(plan, t + k * cfg.dt);
    w.p_ref.push_back(r.p_ref);
    w.v_ref.push_back(r.v_ref);
    w.a_ref.push_back(r.a_ref);
    w.foot_active.push_back(r.foot_active);
    w.foot_nominal.push_back(r.foot_centers);
    w.foot_nominal_velocity.push_back(r.foot_velocities);
  }
  w.p0 = state.p_com;
  w.v0 = state.linear() / model.mass;
  w.eta0 = state.angular() / model.mass;
  w.feet0 = feet;
  w.theta_hat = est.theta_hat;
  return w;
}

LeastSquaresCost build_cost(const MPCWindow& w, const MPCConfig& cfg, const MPCLayout& L) {
  std::vector<Triplet> t;
  std::vector<double> target;
  int row = 0;
  auto push_state = [&](int col, const Vec3& sqrt_w, const Vec3& ref) {
    for (int i = 0; i < 3; ++i) {
      t.emplace_back(row, col + i, sqrt_w(i));
      target.push_back(sqrt_w(i) * ref(i));
      ++row;
    }
  };
  const Vec3 s_com = cfg.weight_com.cwiseSqrt();
  const Vec3 s_eta = cfg.weight_eta.cwiseSqrt();
  const Vec3 s_contact = cfg.weight_contact.cwiseSqrt();
  for (int k = 0; k <= L.horizon; ++k) {
    push_state(L.com(k), s_com, w.p_ref[k]);
    push_state(L.eta(k), s_eta, Vec3::Zero());
    for (int f = 0; f < L.n_feet; ++f) push_state(L.foot(k, f), s_contact, w.foot_nominal[k][f]);
  }

  // Per-foot corner spread: corner force minus the foot's mean corner force.
  const int cpf = L.corners_per_foot;
  const double s_sym = std::sqrt(cfg.weight_force_symmetry);
  const double s_rate = std::sqrt(cfg.weight_force_symmetry * cfg.force_rate_ratio);
  for (int k = 0; k < L.horizon; ++k) {
    for (int f = 0; f < L.n_feet; ++f) {
      if (!w.foot_active[k][f] || s_sym == 0.0) continue;
      for (int a = 0; a < cpf; ++a) {
        for (int i = 0; i < 3; ++i) {
          for (int b = 0; b < cpf; ++b) {
            const double coef = s_sym * ((a == b ? 1.0 : 0.0) - 1.0 / cpf);
            t.emplace_back(row, L.force(k, f * cpf + b) + i, coef);
          }
          target.push_back(0.0);
          ++row;
        }
      }
    }
    if (k > 0 && s_rate > 0.0) {
      for (int c = 0; c < L.n_corners(); ++c) {
        const int f = L.foot_of(c);
        if (!w.foot_active[k][f] || !w.foot_active[k - 1][f]) continue;
        for (int i = 0; i < 3; ++i) {
          t.emplace_back(row, L.force(k, c) + i, s_rate);
          t.emplace_back(row, L.force(k - 1, c) + i, -s_rate);
          target.push_back(0.0);
          ++row;
        }
      }
    }
    const double s_vel = std::sqrt(cfg.weight_swing_velocity);
    for (int f = 0; f < L.n_feet; ++f) {
      if (w.foot_active[k][f]) continue;
      for (int i = 0; i < 3; ++i) {
        t.emplace_back(row, L.foot_velocity(k, f) + i, s_vel);
        target.push_back(s_vel * w.foot_nominal_velocity[k][f](i));
        ++row;
      }
    }
  }
  LeastSquaresCost c;
  c.M = from_triplets(row, L.size(), t);
  c.target = Eigen::Map<VecX>(target.data(), static_cast<Eigen::Index>(target.size()));
  return c;
}

ConstraintSet::ConstraintSet(const MPCWindow& w, const MPCConfig& cfg, const MPCLayout& L)
    : w_(&w), cfg_(&cfg), L_(L) {
  const int N = L.horizon;
  eq_kind_.insert(eq_kind_.end(), L.state_dim(), RowKind::initial);
  eq_kind_.insert(eq_kind_.end(), N * L.state_dim(), RowKind::dynamics);
  eq_kind_.insert(eq_kind_.end(), 3 * L.n_stab, RowKind::coupling);

  // The stability row is quadratic in z; dividing by |z| of the measured
  // state keeps its value and its nu-gradient of order one near the origin.
  // At knot 0 the state is data, so for |z| ~ 0 the row is vacuous (0 <= 0
  // with zero gradient) and is dropped to keep the QPs regular.
  const Vec3 z1 = w.p0 - w.p_ref[0];
  const Vec3 z2 = cfg.gains.k1.cwiseProduct(z1) + w.v0 - w.v_ref[0];
  const double z_norm = std::sqrt(z1.squaredNorm() + z2.squaredNorm());
  stab_scale_ = 1.0 / std::max(z_norm, 1e-6);
  for (int j = 0; j < L.n_stab; ++j)
    if (stab_knot(j) > 0 || z_norm >= 1e-9) stab_rows_.push_back(j);
  in_kind_.insert(in_kind_.end(), stab_rows_.size(), RowKind::stability);
  in_kind_.insert(in_kind_.end(), L.n_stab, RowKind::eta);
  for (int k = 0; k < N; ++k)
    for (int c = 0; c < L.n_corners(); ++c)
      if (w.foot_active[k][L.foot_of(c)])
        for (int s = 0; s < 5; ++s) friction_.push_back({k, c, s});
  in_kind_.insert(in_kind_.end(), friction_.size(), RowKind::friction);
  // The contact box bounds where a foot lands: it applies at knots where the
  // foot is in contact after having swung inside the window.
  for (int f = 0; f < L.n_feet; ++f) {
    bool moved = false;
    for (int k = 1; k <= N; ++k) {
      moved = moved || !w.foot_active[k - 1][f];
      if (!moved || !w.foot_active[k][f]) continue;
      for (int a = 0; a < 3; ++a) {
        if (cfg.contact_lower(a) == cfg.contact_upper(a)) {
          pinned_.push_back({k, f, a, true});
          continue;
        }
        box_.push_back({k, f, a, true});
        box_.push_back({k, f, a, false});
      }
    }
  }
  in_kind_.insert(in_kind_.end(), box_.size(), RowKind::contact_box);
  eq_kind_.insert(eq_kind_.end(), pinned_.size(), RowKind::contact_box);

  lower_ = VecX::Constant(L.size(), -kInf);
  upper_ = VecX::Constant(L.size(), kInf);
  for (int k = 0; k < N; ++k) {
    for (int c = 0; c < L.n_corners(); ++c) {
      if (w.foot_active[k][L.foot_of(c)]) continue;
      lower_.segment<3>(L.force(k, c)).setZero();
      upper_.segment<3>(L.force(k, c)).setZero();
    }
    for (int f = 0; f < L.n_feet; ++f) {
      const double b = w.foot_active[k][f] ? 0.0 : cfg.swing_velocity_bound;
      lower_.segment<3>(L.foot_velocity(k, f)).setConstant(-b);
      upper_.segment<3>(L.foot_velocity(k, f)).setConstant(b);
    }
  }
  for (int j = 0; j < L.n_stab; ++j) {
    lower_.segment<3>(L.nu(j)).setConstant(-cfg.nu_bound);
    upper_.segment<3>(L.nu(j)).setConstant(cfg.nu_bound);
  }
}

Vec3 ConstraintSet::nominal_feedback_at(const VecX& x, int k) const {
  const GainSet& g = cfg_->gains;
  const Vec3 z1 = seg(x, L_.com(k)) - w_->p_ref[k];
  const Vec3 z2 = g.k1.cwiseProduct(z1) + seg(x, L_.vel(k)) - w_->v_ref[k];
  Vec3 u = -(g.k1 + g.k2).cwiseProduct(z2) + g.k1.cwiseProduct(g.k1).cwiseProduct(z1) -
           w_->theta_hat + w_->a_ref[k];
  u.z() -= w_->gravity;
  return u;
}

Vec3 ConstraintSet::coupling(const VecX& x, int j) const {
  const int k = stab_knot(j);
  Vec3 sum = Vec3::Zero();
  for (int c = 0; c < L_.n_corners(); ++c)
    if (w_->foot_active[k][L_.foot_of(c)]) sum += seg(x, L_.force(k, c));
  return sum - nominal_feedback_at(x, k) - seg(x, L_.nu(j));
}

VecX ConstraintSet::eq(const VecX& x) const {
  VecX r(n_eq());
  const int sd = L_.state_dim();
  const double dt = cfg_->dt;
  r.head(sd) = x.segment(0, sd);
  r.segment<3>(0) -= w_->p0;
  r.segment<3>(3) -= w_->v0;
  r.segment<3>(6) -= w_->eta0;
  for (int f = 0; f < L_.n_feet; ++f) r.segment<3>(9 + 3 * f) -= w_->feet0[f];

  for (int k = 0; k < L_.horizon; ++k) {
    const int row = sd * (k + 1);
    const Vec3 p = seg(x, L_.com(k));
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();
    for (int c = 0; c < L_.n_corners(); ++c) {
      const int f = L_.foot_of(c);
      if (!w_->foot_active[k][f]) continue;
      const Vec3 fc = seg(x, L_.force(k, c));
      const Vec3 pc = seg(x, L_.foot(k, f)) + w_->corner_offsets[c % L_.corners_per_foot];
      force += fc;
      torque += (pc - p).cross(fc);
    }
    force.z() += w_->gravity;
    r.segment<3>(row) = seg(x, L_.com(k + 1)) - p - dt * seg(x, L_.vel(k));
    r.segment<3>(row + 3) = seg(x, L_.vel(k + 1)) - seg(x, L_.vel(k)) - dt * force;
    r.segment<3>(row + 6) = seg(x, L_.eta(k + 1)) - seg(x, L_.eta(k)) - dt * torque;
    for (int f = 0; f < L_.n_feet; ++f) {
      const double free = w_->foot_active[k][f] ? 0.0 : 1.0;
      r.segment<3>(row + 9 + 3 * f) = seg(x, L_.foot(k + 1, f)) - seg(x, L_.foot(k, f)) -
                                      dt * free * seg(x, L_.foot_velocity(k, f));
    }
  }
  const int base = sd * (L_.horizon + 1);
  for (int j = 0; j < L_.n_stab; ++j) r.segment<3>(base + 3 * j) = coupling(x, j);
  int row = base + 3 * L_.n_stab;
  for (const auto& b : pinned_) {
    const Mat3& R = w_->foot_rotation[b.foot];
    const Vec3 d = R.transpose() * (seg(x, L_.foot(b.knot, b.foot)) - w_->foot_nominal[b.knot][b.foot]);
    r(row++) = d(b.axis) - cfg_->contact_lower(b.axis);
  }
  return r;
}

SpMat ConstraintSet::eq_jacobian(const VecX& x) const {
  std::vector<Triplet> t;
  const int sd = L_.state_dim();
  const double dt = cfg_->dt;
  const Mat3 I = Mat3::Identity();
  for (int i = 0; i < sd; ++i) t.emplace_back(i, i, 1.0);
  for (int k = 0; k < L_.horizon; ++k) {
    const int row = sd * (k + 1);
    const Vec3 p = seg(x, L_.com(k));
    for (int i = 0; i < sd; ++i) {
      t.emplace_back(row + i, L_.state(k + 1) + i, 1.0);
      t.emplace_back(row + i, L_.state(k) + i, -1.0);
    }
    add_block(t, row, L_.vel(k), -dt * I);
    Mat3 d_torque_dp = Mat3::Zero();
    for (int c = 0; c < L_.n_corners(); ++c) {
      const int f = L_.foot_of(c);
      if (!w_->foot_active[k][f]) continue;
      const Vec3 fc = seg(x, L_.force(k, c));
      const Vec3 pc = seg(x, L_.foot(k, f)) + w_->corner_offsets[c % L_.corners_per_foot];
      add_block(t, row + 3, L_.force(k, c), -dt * I);
      add_block(t, row + 6, L_.force(k, c), -dt * skew(pc - p));
      add_block(t, row + 6, L_.foot(k, f), dt * skew(fc));
      d_torque_dp += skew(fc);
    }
    add_block(t, row + 6, L_.com(k), -dt * d_torque_dp);
    for (int f = 0; f < L_.n_feet; ++f)
      if (!w_->foot_active[k][f]) add_block(t, row + 9 + 3 * f, L_.foot_velocity(k, f), -dt * I);
  }
  const int base = sd * (L_.horizon + 1);
  const GainSet& g = cfg_->gains;
  for (int j = 0; j < L_.n_stab; ++j) {
    const int k = stab_knot(j);
    const int row = base + 3 * j;
    for (int c = 0; c < L_.n_corners(); ++c)
      if (w_->foot_active[k][L_.foot_of(c)]) add_block(t, row, L_.force(k, c), I);
    add_diag(t, row, L_.com(k), g.k1.cwiseProduct(g.k2));
    add_diag(t, row, L_.vel(k), g.k1 + g.k2);
    add_block(t, row, L_.nu(j), -I);
  }
  int row = base + 3 * L_.n_stab;
  for (const auto& b : pinned_)
    add_row(t, row++, L_.foot(b.knot, b.foot), w_->foot_rotation[b.foot].col(b.axis));
  return from_triplets(n_eq(), L_.size(), t);
}

namespace {

// Rows of the linearized friction pyramid in the surface frame, plus the
// minimum normal force row.
Vec3 pyramid_row(int side, double mu) {
  switch (side) {
    case 0: return {1.0, 0.0, -mu};
    case 1: return {-1.0, 0.0, -mu};
    case 2: return {0.0, 1.0, -mu};
    case 3: return {0.0, -1.0, -mu};
    default: return {0.0, 0.0, -1.0};
  }
}

struct StabTerms {
  Vec3 z1, z2;
  double value;
  Vec3 d_p, d_v, d_nu;
};

StabTerms stab_terms(const VecX& x, const MPCWindow& w, const MPCConfig& cfg, const MPCLayout& L,
                     int j, int k) {
  const GainSet& g = cfg.gains;
  StabTerms s;
  s.z1 = seg(x, L.com(k)) - w.p_ref[k];
  s.z2 = g.k1.cwiseProduct(s.z1) + seg(x, L.vel(k)) - w.v_ref[k];
  const Vec3 nu = seg(x, L.nu(j));
  const double mag = s.z1.squaredNorm() + s.z2.squaredNorm();
  s.value = stability_residual(s.z1, s.z2, nu, g) + cfg.eps_stab * std::min(1.0, mag);
  const double e = mag < 1.0 ? 2.0 * cfg.eps_stab : 0.0;
  const Vec3 d_z1 = -2.0 * g.k1.cwiseProduct(s.z1) + s.z2 + e * s.z1;
  const Vec3 d_z2 = -2.0 * g.k2.cwiseProduct(s.z2) + s.z1 + nu + e * s.z2;
  s.d_p = d_z1 + g.k1.cwiseProduct(d_z2);
  s.d_v = d_z2;
  s.d_nu = s.z2;
  return s;
}

}  // namespace

VecX ConstraintSet::ineq(const VecX& x) const {
  VecX r(n_in());
  int row = 0;
  const double a2 = cfg_->eta_bound * cfg_->eta_bound;
  for (int j : stab_rows_) r(row++) = stab_scale_ * stab_terms(x, *w_, *cfg_, L_, j, stab_knot(j)).value;
  for (int j = 0; j < L_.n_stab; ++j) {
    const int k = stab_knot(j);
    const double next = smooth_norm(seg(x, L_.eta(k + 1)).squaredNorm());
    r(row++) = cfg_->stability_mode == StabilityMode::full_contraction
                   ? next - smooth_norm(seg(x, L_.eta(k)).squaredNorm() + cfg_->eta_slack)
                   : next - smooth_norm(a2);
  }
  const double fz_min = cfg_->fz_min / w_->mass;
  for (const auto& fr : friction_) {
    const Mat3& R = w_->foot_rotation[L_.foot_of(fr.corner)];
    const Vec3 local = R.transpose() * seg(x, L_.force(fr.knot, fr.corner));
    r(row++) = pyramid_row(fr.side, cfg_->friction).dot(local) + (fr.side == 4 ? fz_min : 0.0);
  }
  for (const auto& b : box_) {
    const Mat3& R = w_->foot_rotation[b.foot];
    const Vec3 d = R.transpose() * (seg(x, L_.foot(b.knot, b.foot)) - w_->foot_nominal[b.knot][b.foot]);
    r(row++) = b.upper ? d(b.axis) - cfg_->contact_upper(b.axis) : cfg_->contact_lower(b.axis) - d(b.axis);
  }
  return r;
}

SpMat ConstraintSet::ineq_jacobian(const VecX& x) const {
  std::vector<Triplet> t;
  int row = 0;
  for (int j : stab_rows_) {
    const int k = stab_knot(j);
    const StabTerms s = stab_terms(x, *w_, *cfg_, L_, j, k);
    add_row(t, row, L_.com(k), stab_scale_ * s.d_p);
    add_row(t, row, L_.vel(k), stab_scale_ * s.d_v);
    add_row(t, row, L_.nu(j), stab_scale_ * s.d_nu);
    ++row;
  }
  for (int j = 0; j < L_.n_stab; ++j, ++row) {
    const int k = stab_knot(j);
    const Vec3 next = seg(x, L_.eta(k + 1));
    add_row(t, row, L_.eta(k + 1), next / smooth_norm(next.squaredNorm()));
    if (cfg_->stability_mode == StabilityMode::full_contraction) {
      const Vec3 cur = seg(x, L_.eta(k));
      add_row(t, row, L_.eta(k), -cur / smooth_norm(cur.squaredNorm() + cfg_->eta_slack));
    }
  }
  for (const auto& fr : friction_) {
    const Mat3& R = w_->foot_rotation[L_.foot_of(fr.corner)];
    add_row(t, row++, L_.force(fr.knot, fr.corner), R * pyramid_row(fr.side, cfg_->friction));
  }
  for (const auto& b : box_) {
    const Mat3& R = w_->foot_rotation[b.foot];
    const Vec3 axis = R.col(b.axis);
    add_row(t, row++, L_.foot(b.knot, b.foot), b.upper ? axis : Vec3(-axis));
  }
  return from_triplets(n_in(), L_.size(), t);
}

SpMat ConstraintSet::ineq_curvature(const VecX& x, const VecX& y_in) const {
  std::vector<Triplet> t;
  for (int j = 0; j < L_.n_stab; ++j) {
    const double y = y_in.size() > 0 ? std::max(0.0, y_in(static_cast<int>(stab_rows_.size()) + j)) : 0.0;
    if (y == 0.0) continue;
    const int col = L_.eta(stab_knot(j) + 1);
    const Vec3 e = seg(x, col);
    const double r = smooth_norm(e.squaredNorm());
    const Mat3 h = y * (Mat3::Identity() - e * e.transpose() / (r * r)) / r;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.emplace_back(col + a, col + b, h(a, b));
  }
  return from_triplets(L_.size(), L_.size(), t);
}

MPCProblem::MPCProblem(MPCWindow window, const MPCConfig& cfg)
    : window_(std::make_unique<MPCWindow>(std::move(window))), cfg_(cfg) {
  cfg_.validate();
  const MPCWindow& w = *window_;
  if (w.horizon() != cfg_.horizon)
    throw ContractViolation("MPCProblem: window horizon does not match config");
  layout_.horizon = cfg_.horizon;
  layout_.n_feet = w.n_feet();
  layout_.corners_per_foot = static_cast<int>(w.corner_offsets.size());
  layout_.n_stab = stab_count(cfg_);
  cost_ = build_cost(w, cfg_, layout_);
  constraints_ = std::make_unique<ConstraintSet>(w, cfg_, layout_);

  const ConstraintSet* cs = constraints_.get();
  const LeastSquaresCost* cost = &cost_;
  const SpMat gn = cost_.gauss_newton();
  nlp_.n = layout_.size();
  nlp_.cost = [cost](const VecX& x) { return cost->value(x); };
  nlp_.cost_gradient = [cost](const VecX& x) { return cost->gradient(x); };
  nlp_.hessian = [cs, gn](const VecX& x, const VecX&, const VecX& y_in) -> SpMat {
    return gn + cs->ineq_curvature(x, y_in);
  };
  nlp_.n_eq = cs->n_eq();
  nlp_.eq = [cs](const VecX& x) { return cs->eq(x); };
  nlp_.eq_jacobian = [cs](const VecX& x) { return cs->eq_jacobian(x); };
  nlp_.n_in = cs->n_in();
  nlp_.ineq = [cs](const VecX& x) { return cs->ineq(x); };
  nlp_.ineq_jacobian = [cs](const VecX& x) { return cs->ineq_jacobian(x); };
  nlp_.lower = cs->lower();
  nlp_.upper = cs->upper();
}

VecX MPCProblem::cold_start() const {
  const MPCWindow& w = *window_;
  const MPCLayout& L = layout_;
  VecX x = VecX::Zero(L.size());
  for (int k = 0; k <= L.horizon; ++k) {
    x.segment<3>(L.com(k)) = k == 0 ? w.p0 : w.p_ref[k];
    x.segment<3>(L.vel(k)) = k == 0 ? w.v0 : w.v_ref[k];
    x.segment<3>(L.eta(k)) = k == 0 ? w.eta0 : Vec3::Zero();
    for (int f = 0; f < L.n_feet; ++f)
      x.segment<3>(L.foot(k, f)) = k == 0 ? w.feet0[f] : w.foot_nominal[k][f];
  }
  for (int k = 0; k < L.horizon; ++k) {
    int active = 0;
    for (int c = 0; c < L.n_corners(); ++c) active += w.foot_active[k][L.foot_of(c)] ? 1 : 0;
    Vec3 total = w.a_ref[k];
    total.z() -= w.gravity;
    for (int c = 0; c < L.n_corners(); ++c)
      if (active > 0 && w.foot_active[k][L.foot_of(c)])
        x.segment<3>(L.force(k, c)) = total / active;
    for (int f = 0; f < L.n_feet; ++f)
      if (!w.foot_active[k][f]) {
        const Vec3 v = (w.foot_nominal[k + 1][f] - x.segment<3>(L.foot(k, f))) / cfg_.dt;
        x.segment<3>(L.foot_velocity(k, f)) =
            v.cwiseMax(-cfg_.swing_velocity_bound).cwiseMin(cfg_.swing_velocity_bound);
      }
  }
  return x;
}

VecX MPCProblem::shifted_warm_start(const VecX& previous) const {
  const MPCLayout& L = layout_;
  if (previous.size() != L.size()) return cold_start();
  const MPCWindow& w = *window_;
  VecX x = previous;
  const int sd = L.state_dim();
  const int cd = L.control_dim();
  for (int k = 0; k < L.horizon; ++k) x.segment(L.state(k), sd) = previous.segment(L.state(k + 1), sd);
  for (int k = 0; k + 1 < L.horizon; ++k)
    x.segment(L.control(k), cd) = previous.segment(L.control(k + 1), cd);
  for (int j = 0; j + 1 < L.n_stab; ++j) x.segment<3>(L.nu(j)) = previous.segment<3>(L.nu(j + 1));
  x.segment<3>(L.com(0)) = w.p0;
  x.segment<3>(L.vel(0)) = w.v0;
  x.segment<3>(L.eta(0)) = w.eta0;
  for (int f = 0; f < L.n_feet; ++f) x.segment<3>(L.foot(0, f)) = w.feet0[f];
  // The contact schedule moves with the window: re-seed forces of corners
  // whose activity changed and clip everything into the new bounds.
  const VecX cold = cold_start();
  for (int k = 0; k < L.horizon; ++k)
    for (int c = 0; c < L.n_corners(); ++c)
      if (w.foot_active[k][L.foot_of(c)] && x.segment<3>(L.force(k, c)).isZero(0.0))
        x.segment<3>(L.force(k, c)) = cold.segment<3>(L.force(k, c));
  for (int f = 0; f < L.n_feet; ++f)
    x.segment<3>(L.foot(L.horizon, f)) = cold.segment<3>(L.foot(L.horizon, f));
  return x.cwiseMax(constraints_->lower()).cwiseMin(constraints_->upper());
}

MPCSolution solve(const MPCProblem& problem, const VecX* warm_start) {
  const VecX start = warm_start ? problem.shifted_warm_start(*warm_start) : problem.cold_start();
  MPCSolution sol;
  sol.layout = problem.layout();
  sol.report = solve_nlp(problem.nlp(), start, problem.config().solver, &sol.trace);
  if (warm_start && (sol.report.status == SolveStatus::numerical_failure ||
                     sol.report.status == SolveStatus::infeasible)) {
    // A stale warm start can stall near a degenerate linearization; retry
    // once from the reference trajectory.
    const int spent = sol.report.iterations;
    sol.trace = SQPTrace{};
    sol.report = solve_nlp(problem.nlp(), problem.cold_start(), problem.config().solver, &sol.trace);
    sol.report.iterations += spent;
  }
  const VecX& x = sol.report.solution;
  sol.x = x;
  const MPCLayout& L = sol.layout;
  const MPCWindow& w = problem.window();
  const ConstraintSet& cs = problem.constraints();

  for (int c = 0; c < L.n_corners(); ++c) sol.forces_per_mass.push_back(seg(x, L.force(0, c)));
  for (int f = 0; f < L.n_feet; ++f) sol.feet_next.push_back(seg(x, L.foot(1, f)));
  for (int k = 0; k <= L.horizon; ++k) {
    sol.predicted_com.push_back(seg(x, L.com(k)));
    sol.predicted_eta.push_back(seg(x, L.eta(k)));
  }
  sol.u_n = cs.nominal_feedback_at(x, 0);
  if (L.n_stab > 0) {
    sol.nu = seg(x, L.nu(0));
    sol.coupling_residual = cs.coupling(x, 0).cwiseAbs().maxCoeff();
  }
  const StabTerms s0 = L.n_stab > 0 ? stab_terms(x, w, problem.config(), L, 0, 0) : StabTerms{};
  if (L.n_stab > 0) sol.stability_residual = s0.value;
  sol.eta_norm_next = seg(x, L.eta(1)).norm();

  const VecX ce = cs.eq(x);
  for (int i = 0; i < cs.n_eq(); ++i)
    if (cs.eq_kind(i) == RowKind::contact_box)
      sol.max_box_violation = std::max(sol.max_box_violation, std::abs(ce(i)));
  const VecX g = cs.ineq(x);
  for (int i = 0; i < cs.n_in(); ++i) {
    if (cs.in_kind(i) == RowKind::friction)
      sol.max_friction_violation = std::max(sol.max_friction_violation, g(i));
    if (cs.in_kind(i) == RowKind::contact_box)
      sol.max_box_violation = std::max(sol.max_box_violation, g(i));
  }
  sol.cost = problem.cost().value(x);
  return sol;
}

ControlCommand extract_control(const MPCSolution& sol, double mass) {
  if (!(mass > 0.0)) throw ContractViolation("extract_control: mass must be positive");
  ControlCommand cmd;
  for (const Vec3& f : sol.forces_per_mass) cmd.corner_forces.push_back(mass * f);
  cmd.nu = sol.nu;
  cmd.u_n = sol.u_n;
  cmd.feet_next = sol.feet_next;
  return cmd;
}

}  // namespace scmpc
