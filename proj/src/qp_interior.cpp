#include "scmpc/qp_solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <vector>

namespace scmpc {

namespace {

constexpr double kInfThreshold = 1e20;
constexpr double kDualBlowUp = 1e12;

double inf_norm(const VecX& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// One finite side of an inequality row: sigma * a_r x + s = sigma * b, s >= 0.
struct Side {
  int row;  // index into the constrained-row list
  double sigma;
  double b;
};

}  // namespace

QPResult solve_qp_interior_point(const QPProblem& qp, const QPSettings& st, const VecX* x_warm) {
  const int n = static_cast<int>(qp.q.size());
  const int m = static_cast<int>(qp.l.size());

  // Keep rows with at least one finite side; classify equalities.
  std::vector<int> rows;
  std::vector<bool> is_eq;
  std::vector<Side> sides;
  for (int i = 0; i < m; ++i) {
    const bool lo = qp.l(i) > -kInfThreshold;
    const bool hi = qp.u(i) < kInfThreshold;
    if (!lo && !hi) continue;
    const int r = static_cast<int>(rows.size());
    rows.push_back(i);
    const bool eq = lo && hi && qp.l(i) == qp.u(i);
    is_eq.push_back(eq);
    if (eq) continue;
    if (hi) sides.push_back({r, 1.0, qp.u(i)});
    if (lo) sides.push_back({r, -1.0, qp.l(i)});
  }
  const int mr = static_cast<int>(rows.size());
  const int ns = static_cast<int>(sides.size());
  std::vector<int> first_side(mr, -1), second_side(mr, -1);
  for (int j = 0; j < ns; ++j) (first_side[sides[j].row] < 0 ? first_side : second_side)[sides[j].row] = j;

  SpMat Aact(mr, n);
  {
    std::vector<Eigen::Triplet<double>> t;
    std::vector<int> map(m, -1);
    for (int r = 0; r < mr; ++r) map[rows[r]] = r;
    for (int k = 0; k < qp.A.outerSize(); ++k)
      for (SpMat::InnerIterator it(qp.A, k); it; ++it)
        if (map[it.row()] >= 0) t.emplace_back(map[it.row()], it.col(), it.value());
    Aact.setFromTriplets(t.begin(), t.end());
  }
  const SpMat AactT = Aact.transpose();
  VecX b_eq = VecX::Zero(mr);
  for (int r = 0; r < mr; ++r)
    if (is_eq[r]) b_eq(r) = qp.l(rows[r]);

  // Quasi-definite augmented matrix with a fixed pattern; only the diagonal
  // changes between iterations.
  const double reg = std::max(st.ipm_regularization, 1e-14);
  const int N = n + mr;
  SpMat K(N, N);
  {
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < qp.P.outerSize(); ++k)
      for (SpMat::InnerIterator it(qp.P, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < Aact.outerSize(); ++k)
      for (SpMat::InnerIterator it(Aact, k); it; ++it) {
        t.emplace_back(n + it.row(), it.col(), it.value());
        t.emplace_back(it.col(), n + it.row(), it.value());
      }
    for (int i = 0; i < N; ++i) t.emplace_back(i, i, 0.0);
    K.setFromTriplets(t.begin(), t.end());
    K.makeCompressed();
  }
  std::vector<double*> diag(N);
  VecX P_diag = VecX::Zero(n);
  for (int j = 0; j < N; ++j) {
    diag[j] = &K.coeffRef(j, j);
    if (j < n) P_diag(j) = *diag[j];
  }
  Eigen::SimplicialLDLT<SpMat> ldlt;
  ldlt.analyzePattern(K);

  VecX x = (x_warm && x_warm->size() == n) ? *x_warm : VecX::Zero(n);
  VecX y_eq = VecX::Zero(mr);
  VecX s(ns), z(ns);
  {
    const VecX ax = Aact * x;
    for (int j = 0; j < ns; ++j) {
      s(j) = std::max(sides[j].sigma * (sides[j].b - ax(sides[j].row)), 1.0);
      z(j) = 1.0;
    }
  }

  const double scale_d = 1.0 + inf_norm(qp.q);
  double scale_p = 1.0;
  for (const Side& sd : sides) scale_p = std::max(scale_p, std::min(std::abs(sd.b), 1e6));
  scale_p = std::max(scale_p, 1.0 + inf_norm(b_eq));
  const double tol_d = st.ipm_tol * scale_d;
  const double tol_p = st.ipm_tol * scale_p;

  QPResult out;
  VecX r_d(n), r_e(mr), r_p(ns), w(mr), e_true(mr);

  auto row_multipliers = [&]() {
    VecX y = y_eq;
    for (int j = 0; j < ns; ++j) y(sides[j].row) += sides[j].sigma * z(j);
    return y;
  };

  // Newton direction for complementarity residual r_c.
  auto direction = [&](const VecX& r_c, VecX& dx, VecX& dy, VecX& ds, VecX& dz) {
    VecX g = VecX::Zero(mr);
    for (int j = 0; j < ns; ++j)
      g(sides[j].row) += sides[j].sigma * (-r_c(j) + z(j) * r_p(j)) / s(j);
    VecX rhs(N);
    rhs.head(n) = -r_d - AactT * g;
    for (int r = 0; r < mr; ++r) rhs(n + r) = is_eq[r] ? -r_e(r) : 0.0;
    VecX d = ldlt.solve(rhs);
    // Refine against the unregularized system.
    for (int it = 0; it < 3; ++it) {
      VecX kd(N);
      kd.head(n) = qp.P * d.head(n) + AactT * d.tail(mr);
      kd.tail(mr) = Aact * d.head(n) - e_true.cwiseProduct(d.tail(mr));
      const VecX res = rhs - kd;
      if (inf_norm(res) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
      d += ldlt.solve(res);
    }
    dx = d.head(n);
    dy = VecX::Zero(mr);
    for (int r = 0; r < mr; ++r)
      if (is_eq[r]) dy(r) = d(n + r);
    const VecX adx = Aact * dx;
    ds.resize(ns);
    dz.resize(ns);
    for (int j = 0; j < ns; ++j) ds(j) = -r_p(j) - sides[j].sigma * adx(sides[j].row);
    // Recover dz from the row variable (sum_j sigma_j dz_j = g_r + v_r)
    // rather than dividing by tiny slacks; on two-sided rows the side with
    // the larger slack uses the complementarity formula.
    for (int r = 0; r < mr; ++r) {
      if (is_eq[r]) continue;
      const int j0 = first_side[r];
      const int j1 = second_side[r];
      const double total = g(r) + d(n + r);
      if (j1 < 0) {
        dz(j0) = sides[j0].sigma * total;
        continue;
      }
      const int big = s(j0) >= s(j1) ? j0 : j1;
      const int small = big == j0 ? j1 : j0;
      dz(big) = (-r_c(big) - z(big) * ds(big)) / s(big);
      dz(small) = sides[small].sigma * (total - sides[big].sigma * dz(big));
    }
  };

  auto max_step = [](const VecX& v, const VecX& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
      if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
    return a;
  };

  int iter = 0;
  for (;; ++iter) {
    const VecX ax = Aact * x;
    r_d = qp.P * x + qp.q + AactT * row_multipliers();
    for (int r = 0; r < mr; ++r) r_e(r) = is_eq[r] ? ax(r) - b_eq(r) : 0.0;
    for (int j = 0; j < ns; ++j)
      r_p(j) = sides[j].sigma * (ax(sides[j].row) - sides[j].b) + s(j);
    const double mu = ns ? s.dot(z) / ns : 0.0;
    const double prim = std::max(inf_norm(r_e), inf_norm(r_p));
    const double dual = inf_norm(r_d);
    out.prim_res = prim;
    out.dual_res = dual;
    if (prim <= tol_p && dual <= tol_d && mu <= st.ipm_gap_tol) {
      out.status = SolveStatus::converged;
      break;
    }
    if (iter >= st.ipm_max_iter || inf_norm(z) > kDualBlowUp || !x.allFinite()) {
      out.status = (prim > 1e3 * tol_p || inf_norm(z) > kDualBlowUp) ? SolveStatus::infeasible
                                                                       : SolveStatus::max_iter;
      if (!x.allFinite()) out.status = SolveStatus::numerical_failure;
      break;
    }

    w.setZero();
    for (int j = 0; j < ns; ++j) w(sides[j].row) += z(j) / s(j);
    for (int r = 0; r < mr; ++r) {
      e_true(r) = is_eq[r] ? 0.0 : 1.0 / w(r);
      *diag[n + r] = is_eq[r] ? -reg : -(e_true(r) + reg);
    }
    for (int j = 0; j < n; ++j) *diag[j] = P_diag(j) + reg;
    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success) {
      out.status = SolveStatus::numerical_failure;
      break;
    }

    // Predictor.
    VecX dx, dy, ds, dz;
    const VecX r_aff = s.cwiseProduct(z);
    direction(r_aff, dx, dy, ds, dz);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    double sigma_c = 0.0;
    if (ns) {
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / ns;
      sigma_c = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0) : 0.0;
    }
    // Corrector.
    const VecX r_c = r_aff + ds.cwiseProduct(dz) - VecX::Constant(ns, sigma_c * mu);
    direction(r_c, dx, dy, ds, dz);
    const double tau = std::clamp(1.0 - mu, 0.9, 0.999);
    const double a = std::min(1.0, tau * std::min(max_step(s, ds), max_step(z, dz)));
    x += a * dx;
    y_eq += a * dy;
    s += a * ds;
    z += a * dz;
  }

  out.iterations = iter;
  out.x = x;
  VecX y_rows = row_multipliers();
  out.y = VecX::Zero(m);
  for (int r = 0; r < mr; ++r) out.y(rows[r]) = y_rows(r);
  if (out.status == SolveStatus::infeasible) {
    const VecX ax = qp.A * x;
    double worst = -1.0;
    for (int i = 0; i < m; ++i) {
      const double v = std::max(ax(i) - qp.u(i), qp.l(i) - ax(i));
      if (v > worst) {
        worst = v;
        out.violated_row = i;
      }
    }
  }
  return out;
}

}  // namespace scmpc
