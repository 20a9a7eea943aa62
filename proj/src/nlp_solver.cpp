#include "scmpc/nlp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scmpc {

namespace {

double inf_norm(const VecX& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool bounded(double v) { return std::abs(v) < 1e20; }

VecX lower_of(const NLProblem& p) {
  return p.lower.size() == p.n ? p.lower : VecX::Constant(p.n, -kInf);
}
VecX upper_of(const NLProblem& p) {
  return p.upper.size() == p.n ? p.upper : VecX::Constant(p.n, kInf);
}

SpMat empty_jac(int rows, int n) { return SpMat(rows, n); }

struct Eval {
  double f = 0.0;
  VecX grad, ce, ci;
  SpMat Je, Ji;
};

Eval evaluate(const NLProblem& p, const VecX& x) {
  Eval e;
  e.f = p.cost(x);
  e.grad = p.cost_gradient(x);
  e.ce = p.n_eq ? p.eq(x) : VecX();
  e.ci = p.n_in ? p.ineq(x) : VecX();
  e.Je = p.n_eq ? p.eq_jacobian(x) : empty_jac(0, p.n);
  e.Ji = p.n_in ? p.ineq_jacobian(x) : empty_jac(0, p.n);
  return e;
}

double violation(const VecX& ce, const VecX& ci) {
  double v = ce.size() ? ce.cwiseAbs().sum() : 0.0;
  for (int i = 0; i < ci.size(); ++i) v += std::max(0.0, ci(i));
  return v;
}

double merit_at(const NLProblem& p, const VecX& x, double mu) {
  const VecX ce = p.n_eq ? p.eq(x) : VecX();
  const VecX ci = p.n_in ? p.ineq(x) : VecX();
  return p.cost(x) + mu * violation(ce, ci);
}

// Stack [Je; Ji; I] with the linearized bounds.
QPProblem step_qp(const SpMat& H, const Eval& e, const VecX& x, const VecX& lo, const VecX& hi,
                  const VecX& rhs_eq, const VecX& rhs_in) {
  const int n = static_cast<int>(x.size());
  const int me = static_cast<int>(e.ce.size());
  const int mi = static_cast<int>(e.ci.size());
  QPProblem qp;
  qp.P = H;
  qp.q = e.grad;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(e.Je.nonZeros() + e.Ji.nonZeros() + n);
  for (int k = 0; k < e.Je.outerSize(); ++k)
    for (SpMat::InnerIterator it(e.Je, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < e.Ji.outerSize(); ++k)
    for (SpMat::InnerIterator it(e.Ji, k); it; ++it)
      t.emplace_back(me + it.row(), it.col(), it.value());
  for (int i = 0; i < n; ++i) t.emplace_back(me + mi + i, i, 1.0);
  qp.A.resize(me + mi + n, n);
  qp.A.setFromTriplets(t.begin(), t.end());
  qp.l.resize(me + mi + n);
  qp.u.resize(me + mi + n);
  qp.l.head(me) = rhs_eq;
  qp.u.head(me) = rhs_eq;
  qp.l.segment(me, mi).setConstant(-kInf);
  qp.u.segment(me, mi) = rhs_in;
  for (int i = 0; i < n; ++i) {
    qp.l(me + mi + i) = bounded(lo(i)) ? lo(i) - x(i) : -kInf;
    qp.u(me + mi + i) = bounded(hi(i)) ? hi(i) - x(i) : kInf;
  }
  return qp;
}

// Elastic variant: c + J d = s+ - s- (eq), c + J d <= s (in), s >= 0, cost
// gains weight * sum(s). Returns only the d part and multipliers.
QPResult elastic_step(const QPSolver& solver, const SpMat& H, const Eval& e, const VecX& x,
                      const VecX& lo, const VecX& hi, double weight) {
  const int n = static_cast<int>(x.size());
  const int me = static_cast<int>(e.ce.size());
  const int mi = static_cast<int>(e.ci.size());
  const int ns = 2 * me + mi;
  const int N = n + ns;
  QPProblem qp;
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < H.outerSize(); ++k)
    for (SpMat::InnerIterator it(H, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int i = 0; i < ns; ++i) t.emplace_back(n + i, n + i, 1e-6);
  qp.P.resize(N, N);
  qp.P.setFromTriplets(t.begin(), t.end());
  qp.q = VecX::Constant(N, weight);
  qp.q.head(n) = e.grad;

  t.clear();
  for (int k = 0; k < e.Je.outerSize(); ++k)
    for (SpMat::InnerIterator it(e.Je, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int i = 0; i < me; ++i) {
    t.emplace_back(i, n + i, -1.0);
    t.emplace_back(i, n + me + i, 1.0);
  }
  for (int k = 0; k < e.Ji.outerSize(); ++k)
    for (SpMat::InnerIterator it(e.Ji, k); it; ++it)
      t.emplace_back(me + it.row(), it.col(), it.value());
  for (int i = 0; i < mi; ++i) t.emplace_back(me + i, n + 2 * me + i, -1.0);
  for (int i = 0; i < N; ++i) t.emplace_back(me + mi + i, i, 1.0);
  qp.A.resize(me + mi + N, N);
  qp.A.setFromTriplets(t.begin(), t.end());
  qp.l.resize(me + mi + N);
  qp.u.resize(me + mi + N);
  qp.l.head(me) = -e.ce;
  qp.u.head(me) = -e.ce;
  qp.l.segment(me, mi).setConstant(-kInf);
  qp.u.segment(me, mi) = -e.ci;
  for (int i = 0; i < n; ++i) {
    qp.l(me + mi + i) = bounded(lo(i)) ? lo(i) - x(i) : -kInf;
    qp.u(me + mi + i) = bounded(hi(i)) ? hi(i) - x(i) : kInf;
  }
  qp.l.tail(ns).setZero();
  qp.u.tail(ns).setConstant(kInf);

  QPResult r = solver.solve(qp);
  QPResult out = r;
  if (r.x.size() == N) {
    out.x = r.x.head(n);
    VecX y(me + mi + n);
    y.head(me + mi) = r.y.head(me + mi);
    y.tail(n) = r.y.segment(me + mi, n);
    out.y = y;
  }
  return out;
}

// Dense damped BFGS approximation, used when the problem brings no Hessian.
struct Bfgs {
  MatX B;
  void update(const VecX& s, const VecX& y) {
    const VecX Bs = B * s;
    const double sBs = s.dot(Bs);
    if (sBs <= 1e-16) return;
    double sy = s.dot(y);
    VecX r = y;
    if (sy < 0.2 * sBs) {  // Powell damping keeps B positive definite
      const double theta = 0.8 * sBs / (sBs - sy);
      r = theta * y + (1.0 - theta) * Bs;
      sy = s.dot(r);
    }
    B += r * r.transpose() / sy - Bs * Bs.transpose() / sBs;
  }
};

VecX lagrangian_gradient(const Eval& e, const VecX& y_eq, const VecX& y_in) {
  VecX g = e.grad;
  if (y_eq.size()) g += e.Je.transpose() * y_eq;
  if (y_in.size()) g += e.Ji.transpose() * y_in;
  return g;
}

}  // namespace

double KKTReport::max() const { return std::max({stationarity, primal, dual, complementarity}); }

KKTReport check_kkt(const NLProblem& p, const VecX& x, const VecX& y_eq, const VecX& y_in,
                    const VecX& y_bound, double tol) {
  const Eval e = evaluate(p, x);
  const VecX lo = lower_of(p);
  const VecX hi = upper_of(p);
  KKTReport r;
  VecX stat = lagrangian_gradient(e, y_eq, y_in);
  if (y_bound.size() == p.n) stat += y_bound;
  double y_max = std::max(inf_norm(y_eq), inf_norm(y_in));
  if (y_bound.size() == p.n) y_max = std::max(y_max, inf_norm(y_bound));
  r.stationarity = inf_norm(stat) / (1.0 + y_max);
  r.primal = inf_norm(e.ce);
  for (int i = 0; i < e.ci.size(); ++i) r.primal = std::max(r.primal, e.ci(i));
  for (int i = 0; i < p.n; ++i) {
    r.primal = std::max({r.primal, lo(i) - x(i), x(i) - hi(i)});
  }
  for (int i = 0; i < y_in.size(); ++i) {
    r.dual = std::max(r.dual, -y_in(i));
    r.complementarity = std::max(r.complementarity, std::abs(y_in(i) * e.ci(i)));
  }
  for (int i = 0; i < y_bound.size(); ++i) {
    const double yb = y_bound(i);
    if (yb > 0.0) {
      if (!bounded(hi(i))) r.dual = std::max(r.dual, yb);
      else r.complementarity = std::max(r.complementarity, yb * std::abs(hi(i) - x(i)));
    } else if (yb < 0.0) {
      if (!bounded(lo(i))) r.dual = std::max(r.dual, -yb);
      else r.complementarity = std::max(r.complementarity, -yb * std::abs(x(i) - lo(i)));
    }
  }
  r.pass = r.max() <= tol;
  return r;
}

KKTReport check_kkt(const NLProblem& p, const SolveReport& rep, double tol) {
  return check_kkt(p, rep.solution, rep.y_eq, rep.y_in, rep.y_bound, tol);
}

SolveReport solve_nlp(const NLProblem& p, const VecX& warm_start, const SQPOptions& opts,
                      SQPTrace* trace, const VecX* y_eq_warm, const VecX* y_in_warm) {
  if (warm_start.size() != p.n || !warm_start.allFinite()) {
    throw ContractViolation("solve_nlp: warm start must be finite with size n");
  }
  const VecX lo = lower_of(p);
  const VecX hi = upper_of(p);
  const QPSolver qp_solver(opts.qp);

  SolveReport rep;
  VecX x = warm_start.cwiseMax(lo).cwiseMin(hi);
  VecX y_eq = (y_eq_warm && y_eq_warm->size() == p.n_eq) ? *y_eq_warm : VecX::Zero(p.n_eq);
  VecX y_in = (y_in_warm && y_in_warm->size() == p.n_in) ? *y_in_warm : VecX::Zero(p.n_in);
  VecX y_b = VecX::Zero(p.n);
  double mu = 1.0;
  Bfgs bfgs;
  if (!p.hessian) bfgs.B = MatX::Identity(p.n, p.n);
  VecX qp_y_warm;

  auto finish = [&](SolveStatus status, int it, double kkt) {
    rep.solution = x;
    rep.y_eq = y_eq;
    rep.y_in = y_in;
    rep.y_bound = y_b;
    rep.iterations = it;
    rep.status = status;
    rep.kkt_residual = kkt;
    return rep;
  };

  Eval e = evaluate(p, x);
  for (int it = 0;; ++it) {
    if (!std::isfinite(e.f) || !e.grad.allFinite()) {
      return finish(SolveStatus::numerical_failure, it, kInf);
    }
    const KKTReport kkt = check_kkt(p, x, y_eq, y_in, y_b, opts.tol_kkt);
    if (kkt.pass) return finish(SolveStatus::converged, it, kkt.max());
    if (it >= opts.max_iter) return finish(SolveStatus::max_iter, it, kkt.max());

    SpMat H;
    if (p.hessian) {
      H = p.hessian(x, y_eq, y_in);
    } else {
      H = bfgs.B.sparseView();
    }
    SpMat I(p.n, p.n);
    I.setIdentity();
    H += opts.regularization * I;

    QPProblem qp = step_qp(H, e, x, lo, hi, -e.ce, -e.ci);
    const VecX d0 = VecX::Zero(p.n);
    QPResult step = qp_solver.solve(qp, &d0, qp_y_warm.size() == qp.l.size() ? &qp_y_warm : nullptr);
    if (trace) trace->qp_iterations += step.iterations;
    bool elastic = false;
    if (step.status == SolveStatus::infeasible || step.status == SolveStatus::numerical_failure) {
      step = elastic_step(qp_solver, H, e, x, lo, hi, std::max(100.0, 10.0 * mu));
      if (trace) trace->qp_iterations += step.iterations;
      elastic = true;
      if (step.status != SolveStatus::converged && step.status != SolveStatus::max_iter) {
        return finish(SolveStatus::numerical_failure, it, kkt.max());
      }
    }
    const VecX d = step.x;
    const int me = p.n_eq;
    const int mi = p.n_in;
    const VecX y_eq_new = step.y.head(me);
    const VecX y_in_new = step.y.segment(me, mi).cwiseMax(0.0);
    const VecX y_b_new = step.y.tail(p.n);
    if (!elastic) qp_y_warm = step.y;

    mu = std::max(mu, 1.1 * std::max(inf_norm(y_eq_new), inf_norm(y_in_new)) + 1e-3);
    const double viol0 = violation(e.ce, e.ci);
    const double phi0 = e.f + mu * viol0;
    // Model decrease of the l1 merit; counts any residual the inexact QP step
    // leaves in the linearized constraints.
    const VecX lin_eq = me ? VecX(e.ce + e.Je * d) : VecX();
    const VecX lin_in = mi ? VecX(e.ci + e.Ji * d) : VecX();
    const double deriv = e.grad.dot(d) + mu * (violation(lin_eq, lin_in) - viol0);

    if (elastic && inf_norm(d) < 1e-10 && viol0 > opts.tol_kkt) {
      // Stationary point of the constraint violation: locally infeasible.
      int worst = -1;
      double wv = 0.0;
      for (int i = 0; i < me; ++i)
        if (std::abs(e.ce(i)) > wv) wv = std::abs(e.ce(i)), worst = i;
      for (int i = 0; i < mi; ++i)
        if (e.ci(i) > wv) wv = e.ci(i), worst = me + i;
      rep.violated_row = worst;
      return finish(SolveStatus::infeasible, it, kkt.max());
    }

    double alpha = 1.0;
    VecX x_new = (x + d).cwiseMax(lo).cwiseMin(hi);
    double phi = merit_at(p, x_new, mu);
    // A numerically null step only refreshes the multipliers.
    const bool null_step = inf_norm(d) <= 1e-9 * (1.0 + inf_norm(x));
    bool accepted = null_step || phi <= phi0 + opts.armijo * alpha * std::min(deriv, 0.0) ||
                    std::abs(phi - phi0) <= 1e-14 * (1.0 + std::abs(phi0));
    if (!accepted && opts.second_order_correction && !elastic) {
      // Second-order correction: re-linearize the constraints at x + d.
      const VecX ce_t = p.n_eq ? p.eq(x_new) : VecX();
      const VecX ci_t = p.n_in ? p.ineq(x_new) : VecX();
      const VecX rhs_eq = me ? VecX(-(ce_t - e.Je * d)) : VecX();
      const VecX rhs_in = mi ? VecX(-(ci_t - e.Ji * d)) : VecX();
      const QPProblem qp2 = step_qp(H, e, x, lo, hi, rhs_eq, rhs_in);
      const QPResult soc = qp_solver.solve(qp2, &d, &step.y);
      if (trace) trace->qp_iterations += soc.iterations;
      if (soc.status == SolveStatus::converged) {
        const VecX x_soc = (x + soc.x).cwiseMax(lo).cwiseMin(hi);
        const double phi_soc = merit_at(p, x_soc, mu);
        if (phi_soc <= phi0 + opts.armijo * std::min(deriv, 0.0)) {
          x_new = x_soc;
          phi = phi_soc;
          accepted = true;
        }
      }
    }
    while (!accepted) {
      alpha *= 0.5;
      if (alpha < opts.min_step) {
        // No merit decrease within the QP accuracy: the point may already be
        // stationary with the fresh multipliers.
        y_eq = y_eq_new;
        y_in = y_in_new;
        y_b = y_b_new;
        const KKTReport fresh = check_kkt(p, x, y_eq, y_in, y_b, opts.tol_kkt);
        return finish(fresh.pass ? SolveStatus::converged : SolveStatus::numerical_failure, it,
                      fresh.max());
      }
      x_new = (x + alpha * d).cwiseMax(lo).cwiseMin(hi);
      phi = merit_at(p, x_new, mu);
      accepted = phi <= phi0 + opts.armijo * alpha * std::min(deriv, 0.0);
    }
    if (trace) {
      trace->merit_steps.emplace_back(phi0, phi);
      trace->step_sizes.push_back(alpha);
    }

    const Eval e_new = evaluate(p, x_new);
    if (!p.hessian) {
      const VecX s = x_new - x;
      const VecX yv = lagrangian_gradient(e_new, y_eq_new, y_in_new) -
                      lagrangian_gradient(e, y_eq_new, y_in_new);
      bfgs.update(s, yv);
    }
    x = x_new;
    e = e_new;
    // Full multiplier step: the QP multipliers are the estimate for the
    // current linearization even when the primal step is cut short.
    y_eq = y_eq_new;
    y_in = y_in_new;
    y_b = y_b_new;
  }
}

MatX finite_difference_jacobian(const std::function<VecX(const VecX&)>& f, const VecX& x,
                                double step) {
  const VecX f0 = f(x);
  MatX J(f0.size(), x.size());
  VecX xp = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    const VecX fp = f(xp);
    xp(j) = x(j) - h;
    const VecX fm = f(xp);
    xp(j) = x(j);
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

double jacobian_relative_error(const std::function<VecX(const VecX&)>& f, const MatX& analytic,
                               const VecX& x, double step) {
  const MatX fd = finite_difference_jacobian(f, x, step);
  if (fd.rows() != analytic.rows() || fd.cols() != analytic.cols()) {
    return std::numeric_limits<double>::infinity();
  }
  double worst = 0.0;
  for (int i = 0; i < fd.rows(); ++i) {
    for (int j = 0; j < fd.cols(); ++j) {
      const double err = std::abs(analytic(i, j) - fd(i, j)) / std::max(1.0, std::abs(fd(i, j)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace scmpc
