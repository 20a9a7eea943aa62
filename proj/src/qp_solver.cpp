#include "scmpc/qp_solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <vector>

namespace scmpc {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

constexpr double kInfThreshold = 1e20;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;

bool is_inf(double v) { return std::abs(v) >= kInfThreshold; }

double inf_norm(const VecX& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

using Triplets = std::vector<Eigen::Triplet<double>>;
using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;

// Column-wise infinity norms of a sparse matrix.
VecX col_norms(const SpMat& M) {
  VecX out = VecX::Zero(M.cols());
  for (int k = 0; k < M.outerSize(); ++k) {
    for (SpMat::InnerIterator it(M, k); it; ++it) {
      out(it.col()) = std::max(out(it.col()), std::abs(it.value()));
    }
  }
  return out;
}

VecX row_norms(const SpMat& M) {
  VecX out = VecX::Zero(M.rows());
  for (int k = 0; k < M.outerSize(); ++k) {
    for (SpMat::InnerIterator it(M, k); it; ++it) {
      out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
    }
  }
  return out;
}

void scale_sparse(SpMat& M, const VecX& left, const VecX& right) {
  for (int k = 0; k < M.outerSize(); ++k) {
    for (SpMat::InnerIterator it(M, k); it; ++it) {
      it.valueRef() *= left(it.row()) * right(it.col());
    }
  }
}

VecX safe_inv_sqrt(const VecX& norms) {
  VecX out(norms.size());
  for (int i = 0; i < norms.size(); ++i) {
    const double v = norms(i) < 1e-4 ? 1.0 : norms(i);
    out(i) = 1.0 / std::sqrt(std::min(v, 1e4));
  }
  return out;
}

// Equilibrated copy of a QP plus the factors to undo it:
//   x = D xs,  y = E ys / c,  Ax = E^-1 (As xs).
struct ScaledQP {
  SpMat P, A;
  VecX q, l, u;
  VecX D, E;
  double c = 1.0;
};

ScaledQP equilibrate(const QPProblem& qp, int iters) {
  ScaledQP s;
  s.P = qp.P;
  s.A = qp.A;
  s.q = qp.q;
  const int n = static_cast<int>(qp.q.size());
  const int m = static_cast<int>(qp.l.size());
  s.D = VecX::Ones(n);
  s.E = VecX::Ones(m);
  for (int it = 0; it < iters; ++it) {
    VecX cn = col_norms(s.P);
    if (m > 0) cn = cn.cwiseMax(col_norms(s.A));
    const VecX d = safe_inv_sqrt(cn);
    const VecX e = m > 0 ? safe_inv_sqrt(row_norms(s.A)) : VecX();
    scale_sparse(s.P, d, d);
    if (m > 0) scale_sparse(s.A, e, d);
    s.q = s.q.cwiseProduct(d);
    s.D = s.D.cwiseProduct(d);
    if (m > 0) s.E = s.E.cwiseProduct(e);

    const VecX pn = col_norms(s.P);
    const double mean_p = n > 0 ? pn.mean() : 0.0;
    double gamma = std::max(mean_p, inf_norm(s.q));
    gamma = gamma < 1e-4 ? 1.0 : 1.0 / std::min(gamma, 1e4);
    s.P *= gamma;
    s.q *= gamma;
    s.c *= gamma;
  }
  s.l = qp.l;
  s.u = qp.u;
  for (int i = 0; i < m; ++i) {
    if (!is_inf(s.l(i))) s.l(i) *= s.E(i);
    if (!is_inf(s.u(i))) s.u(i) *= s.E(i);
  }
  return s;
}

VecX project(const VecX& v, const VecX& l, const VecX& u) { return v.cwiseMax(l).cwiseMin(u); }

SpMat build_kkt(const SpMat& P, const SpMat& A, double sigma, const VecX& rho) {
  const int n = static_cast<int>(P.rows());
  const int m = static_cast<int>(A.rows());
  Triplets t;
  t.reserve(P.nonZeros() + A.nonZeros() + n + m);
  for (int k = 0; k < P.outerSize(); ++k) {
    for (SpMat::InnerIterator it(P, k); it; ++it) {
      if (it.row() > it.col()) t.emplace_back(it.row(), it.col(), it.value());
    }
  }
  VecX diag = VecX::Constant(n, sigma);
  for (int k = 0; k < P.outerSize(); ++k) {
    for (SpMat::InnerIterator it(P, k); it; ++it) {
      if (it.row() == it.col()) diag(it.row()) += it.value();
    }
  }
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, diag(i));
  for (int k = 0; k < A.outerSize(); ++k) {
    for (SpMat::InnerIterator it(A, k); it; ++it) {
      t.emplace_back(n + it.row(), it.col(), it.value());
    }
  }
  for (int i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -1.0 / rho(i));
  SpMat K(n + m, n + m);
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

VecX rho_vector(const VecX& l, const VecX& u, double rho) {
  VecX r(l.size());
  for (int i = 0; i < l.size(); ++i) {
    if (is_inf(l(i)) && is_inf(u(i))) {
      r(i) = kRhoMin;
    } else if (std::abs(u(i) - l(i)) < 1e-12) {
      r(i) = kRhoEqScale * rho;
    } else {
      r(i) = rho;
    }
  }
  return r;
}

struct Polished {
  bool ok = false;
  VecX x, y;
};

// Guess the active set from the ADMM iterate and solve the equality-
// constrained KKT system on it, with iterative refinement.
Polished polish(const ScaledQP& s, const QPProblem& qp, const VecX& xs, const VecX& zs,
                const VecX& ys, const QPSettings& st) {
  const int n = static_cast<int>(xs.size());
  const int m = static_cast<int>(zs.size());
  std::vector<int> rows;
  std::vector<double> rhs_b;
  for (int i = 0; i < m; ++i) {
    const bool eq = !is_inf(s.l(i)) && std::abs(s.u(i) - s.l(i)) < 1e-12;
    const bool low = !is_inf(s.l(i)) && (zs(i) - s.l(i) < -ys(i));
    const bool upp = !is_inf(s.u(i)) && (s.u(i) - zs(i) < ys(i));
    if (eq) {
      rows.push_back(i);
      rhs_b.push_back(s.l(i));
    } else if (low) {
      rows.push_back(i);
      rhs_b.push_back(s.l(i));
    } else if (upp) {
      rows.push_back(i);
      rhs_b.push_back(s.u(i));
    }
  }
  const int r = static_cast<int>(rows.size());
  const double delta = 1e-9;

  // Reduced constraint matrix.
  std::vector<int> map(m, -1);
  for (int k = 0; k < r; ++k) map[rows[k]] = k;
  Triplets ta;
  for (int k = 0; k < s.A.outerSize(); ++k) {
    for (SpMat::InnerIterator it(s.A, k); it; ++it) {
      if (map[it.row()] >= 0) ta.emplace_back(map[it.row()], it.col(), it.value());
    }
  }
  SpMat Ared(r, n);
  Ared.setFromTriplets(ta.begin(), ta.end());

  const SpMat Kreg = build_kkt(s.P, Ared, delta, VecX::Constant(r, 1.0 / delta));
  Ldlt ldlt(Kreg);
  if (ldlt.info() != Eigen::Success) return {};

  VecX rhs(n + r);
  rhs.head(n) = -s.q;
  for (int k = 0; k < r; ++k) rhs(n + k) = rhs_b[k];

  // Exact KKT operator (no regularization) for refinement.
  auto apply_exact = [&](const VecX& v) {
    VecX out(n + r);
    out.head(n) = s.P * v.head(n) + Ared.transpose() * v.tail(r);
    out.tail(r) = Ared * v.head(n);
    return out;
  };
  VecX sol = ldlt.solve(rhs);
  for (int it = 0; it < st.polish_refine_iters; ++it) {
    const VecX res = rhs - apply_exact(sol);
    sol += ldlt.solve(res);
  }
  if (!sol.allFinite()) return {};

  VecX yfull = VecX::Zero(m);
  for (int k = 0; k < r; ++k) yfull(rows[k]) = sol(n + k);

  Polished p;
  p.x = s.D.cwiseProduct(sol.head(n));
  p.y = s.E.cwiseProduct(yfull) / s.c;

  const QPResiduals res = qp_residuals(qp, p.x, p.y);
  const double scale_p = 1.0 + inf_norm(qp.A * p.x);
  const double scale_d =
      1.0 + std::max({inf_norm(qp.q), inf_norm(qp.P * p.x), inf_norm(qp.A.transpose() * p.y)});
  p.ok = res.primal <= st.polish_tol * scale_p && res.dual <= st.polish_tol * scale_d &&
         res.sign <= st.polish_tol * scale_d && res.complementarity <= st.polish_tol * scale_d;
  return p;
}

}  // namespace

QPResiduals qp_residuals(const QPProblem& qp, const VecX& x, const VecX& y) {
  QPResiduals r;
  const VecX ax = qp.A * x;
  for (int i = 0; i < ax.size(); ++i) {
    double v = 0.0;
    if (!is_inf(qp.l(i))) v = std::max(v, qp.l(i) - ax(i));
    if (!is_inf(qp.u(i))) v = std::max(v, ax(i) - qp.u(i));
    r.primal = std::max(r.primal, v);
    // y > 0 only on an upper bound, y < 0 only on a lower bound.
    if (y(i) > 0.0) {
      if (is_inf(qp.u(i))) {
        r.sign = std::max(r.sign, y(i));
      } else {
        r.complementarity = std::max(r.complementarity, y(i) * std::abs(qp.u(i) - ax(i)));
      }
    } else if (y(i) < 0.0) {
      if (is_inf(qp.l(i))) {
        r.sign = std::max(r.sign, -y(i));
      } else {
        r.complementarity = std::max(r.complementarity, -y(i) * std::abs(ax(i) - qp.l(i)));
      }
    }
  }
  r.dual = inf_norm(qp.P * x + qp.q + qp.A.transpose() * y);
  return r;
}

QPResult QPSolver::solve(const QPProblem& qp, const VecX* x_warm, const VecX* y_warm) const {
  const QPSettings& st = settings_;
  const int n = static_cast<int>(qp.q.size());
  const int m = static_cast<int>(qp.l.size());
  QPResult out;
  if (qp.P.rows() != n || qp.P.cols() != n || qp.A.cols() != n || qp.A.rows() != m ||
      qp.u.size() != m) {
    throw ContractViolation("QPSolver: inconsistent problem dimensions");
  }
  for (int i = 0; i < m; ++i) {
    if (qp.l(i) > qp.u(i) + 1e-12) {
      out.status = SolveStatus::infeasible;
      out.violated_row = i;
      out.x = VecX::Zero(n);
      out.y = VecX::Zero(m);
      return out;
    }
  }
  if (st.method == QPMethod::interior_point) return solve_qp_interior_point(qp, st, x_warm);

  const ScaledQP s = equilibrate(qp, st.scaling_iters);

  double rho = st.rho;
  VecX rho_vec = rho_vector(s.l, s.u, rho);
  SpMat K = build_kkt(s.P, s.A, st.sigma, rho_vec);
  Ldlt ldlt;
  ldlt.analyzePattern(K);
  ldlt.factorize(K);
  if (ldlt.info() != Eigen::Success) {
    out.status = SolveStatus::numerical_failure;
    return out;
  }

  VecX x = VecX::Zero(n);
  VecX y = VecX::Zero(m);
  if (x_warm && x_warm->size() == n) x = x_warm->cwiseQuotient(s.D);
  if (y_warm && y_warm->size() == m) y = s.c * y_warm->cwiseQuotient(s.E);
  VecX z = project(s.A * x, s.l, s.u);

  const VecX Einv = s.E.cwiseInverse();
  const VecX Dinv = s.D.cwiseInverse();
  VecX rhs(n + m);
  double eps_abs = st.eps_abs;
  double eps_rel = st.eps_rel;
  int polish_attempts = 0;

  for (int k = 1; k <= st.max_iter; ++k) {
    rhs.head(n) = st.sigma * x - s.q;
    rhs.tail(m) = z - y.cwiseQuotient(rho_vec);
    const VecX sol = ldlt.solve(rhs);
    const VecX xt = sol.head(n);
    const VecX zt = z + (sol.tail(m) - y).cwiseQuotient(rho_vec);
    const VecX x_new = st.alpha * xt + (1.0 - st.alpha) * x;
    const VecX z_relax = st.alpha * zt + (1.0 - st.alpha) * z;
    const VecX z_new = project(z_relax + y.cwiseQuotient(rho_vec), s.l, s.u);
    const VecX y_new = y + rho_vec.cwiseProduct(z_relax - z_new);
    const VecX dy = y_new - y;
    x = x_new;
    z = z_new;
    y = y_new;
    out.iterations = k;

    if (k % st.check_every != 0 && k != st.max_iter) continue;
    if (!x.allFinite() || !y.allFinite()) {
      out.status = SolveStatus::numerical_failure;
      break;
    }

    const VecX Ax = s.A * x;
    const VecX Px = s.P * x;
    const VecX Aty = s.A.transpose() * y;
    const double prim = inf_norm(Einv.cwiseProduct(Ax - z));
    const double dual = inf_norm(Dinv.cwiseProduct(Px + s.q + Aty)) / s.c;
    const double prim_scale =
        std::max(inf_norm(Einv.cwiseProduct(Ax)), inf_norm(Einv.cwiseProduct(z)));
    const double dual_scale = std::max({inf_norm(Dinv.cwiseProduct(Px)),
                                        inf_norm(Dinv.cwiseProduct(Aty)),
                                        inf_norm(Dinv.cwiseProduct(s.q))}) /
                              s.c;
    out.prim_res = prim;
    out.dual_res = dual;

    if (prim <= eps_abs + eps_rel * prim_scale && dual <= eps_abs + eps_rel * dual_scale) {
      out.status = SolveStatus::converged;
      if (!st.polish || m == 0) break;
      Polished p = polish(s, qp, x, z, y, st);
      if (p.ok) {
        out.x = p.x;
        out.y = p.y;
        out.polished = true;
        const QPResiduals r = qp_residuals(qp, out.x, out.y);
        out.prim_res = r.primal;
        out.dual_res = r.dual;
        return out;
      }
      // Active set not identified yet: tighten and keep iterating.
      if (++polish_attempts > 6) break;
      eps_abs *= 0.1;
      eps_rel *= 0.1;
      out.status = SolveStatus::max_iter;
      continue;
    }

    // Primal infeasibility certificate: A'dy ~ 0 with u'dy+ + l'dy- < 0.
    const double dy_norm = inf_norm(Einv.cwiseProduct(dy).eval());
    if (dy_norm > 1e-12) {
      const double aty = inf_norm(Dinv.cwiseProduct(s.A.transpose() * dy));
      double support = 0.0;
      bool finite_support = true;
      for (int i = 0; i < m; ++i) {
        if (dy(i) > 0.0) {
          if (is_inf(s.u(i))) {
            finite_support = false;
            break;
          }
          support += s.u(i) * dy(i);
        } else if (dy(i) < 0.0) {
          if (is_inf(s.l(i))) {
            finite_support = false;
            break;
          }
          support += s.l(i) * dy(i);
        }
      }
      if (finite_support && aty <= st.eps_infeasible * dy_norm &&
          support <= -st.eps_infeasible * dy_norm) {
        out.status = SolveStatus::infeasible;
        break;
      }
    }

    if (st.adaptive_rho && k % (5 * st.check_every) == 0) {
      const double pn = prim / std::max(std::max(inf_norm(Ax), inf_norm(z)), 1e-10);
      const double dn =
          dual * s.c / std::max(std::max({inf_norm(Px), inf_norm(Aty), inf_norm(s.q)}), 1e-10);
      const double ratio = std::sqrt(pn / std::max(dn, 1e-16));
      const double rho_new = std::clamp(rho * ratio, kRhoMin, kRhoMax);
      if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
        rho = rho_new;
        rho_vec = rho_vector(s.l, s.u, rho);
        K = build_kkt(s.P, s.A, st.sigma, rho_vec);
        ldlt.factorize(K);
        if (ldlt.info() != Eigen::Success) {
          out.status = SolveStatus::numerical_failure;
          break;
        }
      }
    }
    if (k == st.max_iter) out.status = SolveStatus::max_iter;
  }

  out.x = s.D.cwiseProduct(x);
  out.y = s.E.cwiseProduct(y) / s.c;
  if (out.status == SolveStatus::infeasible) {
    const VecX ax = qp.A * out.x;
    double worst = -1.0;
    for (int i = 0; i < m; ++i) {
      const double v = std::max(is_inf(qp.l(i)) ? 0.0 : qp.l(i) - ax(i),
                                is_inf(qp.u(i)) ? 0.0 : ax(i) - qp.u(i));
      if (v > worst) {
        worst = v;
        out.violated_row = i;
      }
    }
  } else {
    const QPResiduals r = qp_residuals(qp, out.x, out.y);
    out.prim_res = r.primal;
    out.dual_res = r.dual;
  }
  return out;
}

SolveReport solve_qp(const MatX& H, const VecX& g, const MatX& A_eq, const VecX& b_eq,
                     const MatX& A_in, const VecX& b_in, const VecX& lower, const VecX& upper,
                     const QPSettings& settings) {
  const int n = static_cast<int>(g.size());
  const int me = static_cast<int>(b_eq.size());
  const int mi = static_cast<int>(b_in.size());
  const bool has_bounds = lower.size() == n || upper.size() == n;
  const int mb = has_bounds ? n : 0;
  if (H.rows() != n || H.cols() != n || (me && A_eq.cols() != n) || (mi && A_in.cols() != n)) {
    throw ContractViolation("solve_qp: inconsistent dimensions");
  }

  QPProblem qp;
  qp.P = H.sparseView();
  qp.q = g;
  const int m = me + mi + mb;
  MatX A = MatX::Zero(m, n);
  qp.l = VecX::Constant(m, -kInf);
  qp.u = VecX::Constant(m, kInf);
  if (me) {
    A.topRows(me) = A_eq;
    qp.l.head(me) = b_eq;
    qp.u.head(me) = b_eq;
  }
  if (mi) {
    A.middleRows(me, mi) = A_in;
    qp.u.segment(me, mi) = b_in;
  }
  if (mb) {
    A.bottomRows(n).setIdentity();
    if (lower.size() == n) qp.l.tail(n) = lower;
    if (upper.size() == n) qp.u.tail(n) = upper;
  }
  qp.A = A.sparseView();

  const QPResult r = QPSolver(settings).solve(qp);
  SolveReport rep;
  rep.solution = r.x;
  rep.status = r.status;
  rep.iterations = r.iterations;
  rep.violated_row = r.violated_row;
  rep.y_eq = r.y.head(me);
  rep.y_in = r.y.segment(me, mi);
  rep.y_bound = mb ? VecX(r.y.tail(n)) : VecX::Zero(n);
  if (r.status != SolveStatus::infeasible) {
    const QPResiduals res = qp_residuals(qp, r.x, r.y);
    rep.kkt_residual = std::max({res.primal, res.dual, res.complementarity, res.sign});
  }
  rep.message = r.polished ? "polished" : "unpolished";
  return rep;
}

}  // namespace scmpc
