#include "scmpc/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace scmpc {
namespace {

ModelParams unit_mass() {
  ModelParams m;
  m.mass = 1.0;
  return m;
}

ContactCorner corner_at(const Vec3& p, bool active) {
  ContactCorner c;
  c.position = p;
  c.active = active;
  return c;
}

TEST(Skew, ZeroVectorGivesZeroMatrix) { EXPECT_TRUE(skew(Vec3::Zero()).isZero(0.0)); }

TEST(Skew, UnitXMatchesCanonicalRows) {
  Mat3 expected;
  expected << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  EXPECT_TRUE(skew(Vec3::UnitX()).isApprox(expected, 0.0));
}

TEST(Skew, MatchesCrossProductAndIsSkewSymmetric) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 10; ++i) {
    const Vec3 v(u(rng), u(rng), u(rng));
    const Vec3 w(u(rng), u(rng), u(rng));
    const Mat3 s = skew(v);
    EXPECT_LE((s * w - v.cross(w)).norm(), 1e-14);
    EXPECT_LE((s.transpose() + s).norm(), 0.0);
    EXPECT_NEAR(v.dot(s * w), 0.0, 1e-14);
  }
}

TEST(ContactMap, ZeroLeverArmHasZeroTorqueBlock) {
  const Vec3 p(0.3, -0.2, 0.5);
  const Mat63 a = contact_map(p, p);
  EXPECT_TRUE(a.topRows<3>().isIdentity(0.0));
  EXPECT_TRUE(a.bottomRows<3>().isZero(0.0));
}

TEST(ContactMap, UnitLeverArmBottomBlockIsSkew) {
  const Mat63 a = contact_map(Vec3(1, 0, 0), Vec3::Zero());
  EXPECT_TRUE(a.bottomRows<3>().isApprox(skew(Vec3::UnitX()), 0.0));
}

TEST(ContactMap, TorqueRowMatchesDirectCrossProduct) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng)), f(u(rng), u(rng), u(rng));
    const Vec6 w = contact_map(p, c) * f;
    EXPECT_LE((w.head<3>() - f).norm(), 1e-15);
    EXPECT_LE((w.tail<3>() - (p - c).cross(f)).norm(), 1e-14);
  }
}

TEST(DynamicsRhs, FreeFallUnderGravity) {
  const ModelParams m = unit_mass();
  const auto [pd, hd] = dynamics_rhs(CentroidalState{}, {}, {}, {}, m, 0.0);
  Vec6 expected = Vec6::Zero();
  expected(2) = -9.81;
  EXPECT_TRUE(pd.isZero(0.0));
  EXPECT_LE((hd - expected).norm(), 1e-15);
}

TEST(DynamicsRhs, ForceAtCoMCancelsGravity) {
  const ModelParams m = unit_mass();
  const std::vector<ContactCorner> corners{corner_at(Vec3::Zero(), true)};
  const std::vector<Vec3> forces{Vec3(0, 0, 9.81)};
  const auto [pd, hd] = dynamics_rhs(CentroidalState{}, corners, forces, {}, m, 0.0);
  EXPECT_LE(hd.norm(), 1e-15);
}

TEST(DynamicsRhs, OffsetCornerTorqueIsCrossProduct) {
  ModelParams m;
  m.mass = 50.0;
  CentroidalState s;
  s.p_com = Vec3(0.2, 0.1, 0.6);
  const Vec3 p_u = s.p_com + Vec3(0.0, 0.05, -0.1);
  const std::vector<ContactCorner> corners{corner_at(p_u, true)};
  const std::vector<Vec3> forces{Vec3(0, 0, 490.5)};
  const auto [pd, hd] = dynamics_rhs(s, corners, forces, {}, m, 0.0);
  const Vec3 torque = (p_u - s.p_com).cross(forces[0]);
  EXPECT_LE((hd.tail<3>() - torque).norm(), 1e-12);
  EXPECT_NEAR(hd(2), 490.5 + 50.0 * -9.81, 1e-12);
}

TEST(DynamicsRhs, InactiveCornersContributeNothing) {
  const ModelParams m = unit_mass();
  const std::vector<ContactCorner> corners{corner_at(Vec3(1, 2, 3), false)};
  const std::vector<Vec3> forces{Vec3(5, 6, 7)};
  const auto [pd, hd] = dynamics_rhs(CentroidalState{}, corners, forces, {}, m, 0.0);
  const auto [pd0, hd0] = dynamics_rhs(CentroidalState{}, {}, {}, {}, m, 0.0);
  EXPECT_EQ(hd, hd0);
}

TEST(DynamicsRhs, AngularPartEqualsSumOfCrossProducts) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ModelParams m;
  m.mass = 30.0;
  CentroidalState s;
  s.p_com = Vec3(u(rng), u(rng), u(rng));
  s.h << u(rng), u(rng), u(rng), u(rng), u(rng), u(rng);
  std::vector<ContactCorner> corners;
  std::vector<Vec3> forces;
  Vec3 torque = Vec3::Zero();
  for (int i = 0; i < 8; ++i) {
    const bool active = i % 3 != 0;
    corners.push_back(corner_at(Vec3(u(rng), u(rng), u(rng)), active));
    forces.emplace_back(u(rng) * 50, u(rng) * 50, u(rng) * 50);
    if (active) torque += (corners.back().position - s.p_com).cross(forces.back());
  }
  DisturbanceSpec d;
  d.force = Vec3(3, -4, 5);
  d.lever_arm = Vec3(0.1, 0.2, -0.3);
  d.t_start = 0.0;
  d.t_end = 1.0;
  torque += d.lever_arm.cross(d.force);
  const std::vector<DisturbanceSpec> ds{d};
  const auto [pd, hd] = dynamics_rhs(s, corners, forces, ds, m, 0.5);
  EXPECT_LE((hd.tail<3>() - torque).norm(), 1e-12);
  EXPECT_LE((pd - s.linear() / m.mass).norm(), 1e-15);
}

TEST(DynamicsRhs, MismatchedListsAreRejected) {
  const std::vector<ContactCorner> corners{corner_at(Vec3::Zero(), true)};
  EXPECT_THROW(dynamics_rhs(CentroidalState{}, corners, {}, {}, unit_mass(), 0.0), ContractViolation);
}

TEST(EulerStep, ActiveCornerDoesNotMove) {
  std::vector<ContactCorner> corners{corner_at(Vec3(1, 0, 0), true)};
  corners[0].swing_velocity = Vec3(3, 2, 1);
  const std::vector<Vec3> forces{Vec3::Zero()};
  const auto [s, c] = euler_step(CentroidalState{}, corners, forces, unit_mass(), 0.1);
  EXPECT_EQ(c[0].position, Vec3(1, 0, 0));
}

TEST(EulerStep, InactiveCornerMovesWithSwingVelocity) {
  std::vector<ContactCorner> corners{corner_at(Vec3(1, 0, 0), false)};
  corners[0].swing_velocity = Vec3(3, 2, 1);
  const std::vector<Vec3> forces{Vec3::Zero()};
  const auto [s, c] = euler_step(CentroidalState{}, corners, forces, unit_mass(), 0.1);
  EXPECT_LE((c[0].position - Vec3(1.3, 0.2, 0.1)).norm(), 1e-15);
}

TEST(EulerStep, GravityOnlyLowersVerticalMomentum) {
  const auto [s, c] = euler_step(CentroidalState{}, {}, {}, unit_mass(), 0.1);
  EXPECT_NEAR(s.h(2), -0.981, 1e-15);
}

TEST(EulerStep, ZeroGravityAdvancesPositionExactly) {
  ModelParams m;
  m.mass = 2.0;
  m.gravity = 0.0;
  CentroidalState s0;
  s0.p_com = Vec3(0.1, 0.2, 0.3);
  s0.h << 1.0, -2.0, 0.5, 0.3, 0.2, 0.1;
  const auto [s, c] = euler_step(s0, {}, {}, m, 0.25);
  EXPECT_EQ(s.h, s0.h);
  EXPECT_LE((s.p_com - (s0.p_com + 0.25 * s0.linear() / m.mass)).norm(), 1e-15);
}

// Moving CoM, so the contact lever arm changes during a step.
CentroidalState rich_state() {
  CentroidalState s;
  s.p_com = Vec3(0.0, 0.05, 0.5);
  s.h << 2.0, -1.0, 0.5, 0.0, 0.0, 0.0;
  return s;
}

TEST(EulerStep, StepHalvingShowsFirstOrderConvergence) {
  const ModelParams m = unit_mass();
  const std::vector<ContactCorner> corners{corner_at(Vec3(0.1, -0.1, 0.0), true)};
  const std::vector<Vec3> forces{Vec3(0.5, 0.2, 12.0)};
  const double T = 0.4;
  auto euler_n = [&](int n) {
    CentroidalState s = rich_state();
    for (int i = 0; i < n; ++i) s = euler_step(s, corners, forces, m, T / n).first;
    return s;
  };
  CentroidalState ref = rich_state();
  for (int i = 0; i < 64; ++i) ref = plant_step(ref, corners, forces, {}, m, T / 64, i * T / 64);
  std::vector<double> err;
  for (int n : {4, 8, 16}) err.push_back((euler_n(n).h - ref.h).norm());
  // Error halves with the step: order 1.
  EXPECT_NEAR(std::log2(err[0] / err[1]), 1.0, 0.1);
  EXPECT_NEAR(std::log2(err[1] / err[2]), 1.0, 0.1);
}

TEST(EulerStep, SingleStepAgreesWithPlantToSecondOrder) {
  const ModelParams m = unit_mass();
  const std::vector<ContactCorner> corners{corner_at(Vec3(0.1, -0.1, 0.0), true)};
  const std::vector<Vec3> forces{Vec3(0.5, 0.2, 12.0)};
  std::vector<double> err;
  for (double dt : {0.04, 0.02, 0.01}) {
    const CentroidalState e = euler_step(rich_state(), corners, forces, m, dt).first;
    const CentroidalState r = plant_step(rich_state(), corners, forces, {}, m, dt, 0.0);
    err.push_back((e.h - r.h).norm() + (e.p_com - r.p_com).norm());
  }
  EXPECT_NEAR(std::log2(err[0] / err[1]), 2.0, 0.2);
  EXPECT_NEAR(std::log2(err[1] / err[2]), 2.0, 0.2);
}

// Under held forces at fixed corners the vector field is polynomial in time
// (cubic angular momentum), which a fourth-order step integrates exactly.
TEST(PlantStep, MatchesClosedFormUnderHeldForces) {
  ModelParams m;
  m.mass = 3.0;
  const Vec3 p_u(0.1, -0.1, 0.0);
  const std::vector<ContactCorner> corners{corner_at(p_u, true)};
  const Vec3 f(0.5, 0.2, 40.0);
  const std::vector<Vec3> forces{f};
  const CentroidalState s0 = rich_state();
  const Vec3 v0 = s0.linear() / m.mass;
  const Vec3 a = f / m.mass + Vec3(0, 0, m.gravity);
  for (double T : {0.01, 0.1, 0.5}) {
    const CentroidalState s = plant_step(s0, corners, forces, {}, m, T, 0.0);
    const Vec3 p = s0.p_com + v0 * T + 0.5 * a * T * T;
    const Vec3 lever_integral = (p_u - s0.p_com) * T - v0 * (T * T / 2) - a * (T * T * T / 6);
    const Vec3 h_ang = s0.angular() + lever_integral.cross(f);
    EXPECT_LE((s.p_com - p).norm(), 1e-13);
    EXPECT_LE((s.linear() - m.mass * (v0 + a * T)).norm(), 1e-12);
    EXPECT_LE((s.angular() - h_ang).norm(), 1e-12);
  }
}

TEST(PlantStep, ConstantDisturbanceGrowsMomentumLinearly) {
  ModelParams m = unit_mass();
  m.gravity = 0.0;
  DisturbanceSpec d;
  d.force = Vec3(10, 0, 0);
  d.t_start = 0.0;
  d.t_end = 1e9;
  const std::vector<DisturbanceSpec> ds{d};
  CentroidalState s;
  for (int i = 0; i < 100; ++i) s = plant_step(s, {}, {}, ds, m, 0.01, i * 0.01);
  EXPECT_NEAR(s.h(0), 10.0, 1e-9);
}

TEST(PlantStep, ImpulseDepositsExactMomentum) {
  ModelParams m;
  m.mass = 56.7;
  m.gravity = 0.0;
  DisturbanceSpec d;
  d.force = Vec3(80, 0, 0);
  d.t_start = 0.23;
  d.t_end = 0.33;
  d.kind = DisturbanceKind::impulse;
  const std::vector<DisturbanceSpec> ds{d};
  CentroidalState s;
  const double h = 0.01;
  for (int i = 0; i < 100; ++i) s = plant_step(s, {}, {}, ds, m, h, i * h);
  EXPECT_NEAR(s.h(0), 8.0, 1e-6);
}

TEST(PlantStep, ExpiredWindowMatchesUndisturbed) {
  const ModelParams m = unit_mass();
  DisturbanceSpec d;
  d.force = Vec3(10, 5, 0);
  d.t_start = 0.0;
  d.t_end = 1.0;
  const std::vector<DisturbanceSpec> ds{d};
  const CentroidalState a = plant_step(rich_state(), {}, {}, ds, m, 0.01, 2.0);
  const CentroidalState b = plant_step(rich_state(), {}, {}, {}, m, 0.01, 2.0);
  EXPECT_EQ(a.h, b.h);
  EXPECT_EQ(a.p_com, b.p_com);
}

TEST(PlantStep, FreeFloatingConservesAngularMomentum) {
  const ModelParams m = unit_mass();
  CentroidalState s = rich_state();
  s.h.tail<3>() = Vec3(0.3, -0.2, 0.1);
  const double hz0 = s.h(2);
  for (int i = 0; i < 50; ++i) {
    const CentroidalState next = plant_step(s, {}, {}, {}, m, 0.01, i * 0.01);
    EXPECT_EQ(next.h.tail<3>(), s.h.tail<3>());
    EXPECT_NEAR(next.h(2) - s.h(2), -9.81 * 0.01, 1e-10);
    s = next;
  }
  EXPECT_NEAR(s.h(2) - hz0, -9.81 * 0.5, 1e-10);
}

TEST(PlantStep, NonFiniteStateRaisesDivergence) {
  CentroidalState s;
  s.h(0) = std::nan("");
  try {
    plant_step(s, {}, {}, {}, unit_mass(), 0.01, 1.25);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_DOUBLE_EQ(e.time(), 1.25);
  }
}

TEST(DisturbanceWrench, WindowMembership) {
  DisturbanceSpec d;
  d.force = Vec3(20, 0, 0);
  d.t_start = 1.0;
  d.t_end = 1e9;
  const std::vector<DisturbanceSpec> ds{d};
  EXPECT_TRUE(disturbance_wrench(ds, 0.5).isZero(0.0));
  EXPECT_EQ(disturbance_wrench(ds, 2.0).head<3>(), Vec3(20, 0, 0));
}

TEST(ModelParams, NonPositiveMassIsRejectedByKey) {
  ModelParams m;
  m.mass = 0.0;
  try {
    m.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "model.mass");
  }
}

}  // namespace
}  // namespace scmpc
