#include "dualmpc/sqp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>

namespace dualmpc::nlp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

VectorXd NlpProblem::lower_bounds() const { return VectorXd::Constant(num_variables(), -kInf); }
VectorXd NlpProblem::upper_bounds() const { return VectorXd::Constant(num_variables(), kInf); }

MatrixXd NlpProblem::hessian(const VectorXd& x, const VectorXd&, const VectorXd&) const {
  return MatrixXd::Identity(x.size(), x.size());
}

FunctionNlp& FunctionNlp::equalities(int m, Constraints c) {
  m_eq_ = m;
  eq_ = std::move(c);
  return *this;
}

FunctionNlp& FunctionNlp::inequalities(int m, Constraints c) {
  m_in_ = m;
  in_ = std::move(c);
  return *this;
}

FunctionNlp& FunctionNlp::bounds(VectorXd lower, VectorXd upper) {
  lower_ = std::move(lower);
  upper_ = std::move(upper);
  return *this;
}

FunctionNlp& FunctionNlp::hessian_callback(Hessian h) {
  hessian_ = std::move(h);
  return *this;
}

VectorXd FunctionNlp::lower_bounds() const {
  return lower_.size() == n_ ? lower_ : NlpProblem::lower_bounds();
}

VectorXd FunctionNlp::upper_bounds() const {
  return upper_.size() == n_ ? upper_ : NlpProblem::upper_bounds();
}

NlpEvaluation FunctionNlp::evaluate(const VectorXd& x, bool derivatives) const {
  NlpEvaluation ev;
  ev.gradient = VectorXd::Zero(n_);
  ev.objective = objective_(x, derivatives ? &ev.gradient : nullptr);
  ev.c_eq = VectorXd::Zero(m_eq_);
  ev.c_in = VectorXd::Zero(m_in_);
  if (derivatives) {
    ev.jac_eq = MatrixXd::Zero(m_eq_, n_);
    ev.jac_in = MatrixXd::Zero(m_in_, n_);
  }
  if (m_eq_ > 0) eq_(x, ev.c_eq, derivatives ? &ev.jac_eq : nullptr);
  if (m_in_ > 0) in_(x, ev.c_in, derivatives ? &ev.jac_in : nullptr);
  return ev;
}

MatrixXd FunctionNlp::hessian(const VectorXd& x, const VectorXd& y_eq, const VectorXd& y_in) const {
  return hessian_ ? hessian_(x, y_eq, y_in) : NlpProblem::hessian(x, y_eq, y_in);
}

const char* to_string(SqpStatus s) {
  switch (s) {
    case SqpStatus::Optimal: return "optimal";
    case SqpStatus::MaxIterations: return "max_iter";
    case SqpStatus::Infeasible: return "infeasible";
    case SqpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

double constraint_violation(const NlpProblem& problem, const VectorXd& x, const NlpEvaluation& ev) {
  double v = 0.0;
  if (ev.c_eq.size() > 0) v = std::max(v, ev.c_eq.cwiseAbs().maxCoeff());
  if (ev.c_in.size() > 0) v = std::max(v, -ev.c_in.minCoeff());
  const VectorXd lo = problem.lower_bounds();
  const VectorXd hi = problem.upper_bounds();
  for (Eigen::Index j = 0; j < x.size(); ++j) v = std::max({v, lo[j] - x[j], x[j] - hi[j]});
  return v;
}

namespace {

bool finite(const NlpEvaluation& ev, bool derivatives) {
  if (!std::isfinite(ev.objective) || !ev.c_eq.allFinite() || !ev.c_in.allFinite()) return false;
  if (!derivatives) return true;
  return ev.gradient.allFinite() && ev.jac_eq.allFinite() && ev.jac_in.allFinite();
}

// Per-constraint l1 penalty weights.
struct Penalty {
  VectorXd eq;
  VectorXd in;

  double infeasibility(const NlpEvaluation& ev) const {
    double s = eq.dot(ev.c_eq.cwiseAbs());
    for (Eigen::Index i = 0; i < ev.c_in.size(); ++i) s += in[i] * std::max(0.0, -ev.c_in[i]);
    return s;
  }
  double max() const {
    double m = 0.0;
    if (eq.size() > 0) m = std::max(m, eq.maxCoeff());
    if (in.size() > 0) m = std::max(m, in.maxCoeff());
    return m;
  }
};

// Each weight covers its own multiplier with a safety factor and never
// decreases within a solve (decreasing weights admit cycling).
void update_weights(VectorXd& w, const VectorXd& y) {
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::max(w[i], 1.5 * std::abs(y[i]) + 1e-8);
}

VectorXd lagrangian_gradient(const NlpEvaluation& ev, const VectorXd& y_eq, const VectorXd& y_in) {
  VectorXd g = ev.gradient;
  if (y_eq.size() > 0) g -= ev.jac_eq.transpose() * y_eq;
  if (y_in.size() > 0) g -= ev.jac_in.transpose() * y_in;
  return g;
}

struct KktParts {
  double stationarity = 0.0;
  double complementarity = 0.0;
  double scale = 1.0;
  double value() const { return std::max(stationarity, complementarity) / scale; }
};

// Stationarity and complementarity at x with the given multipliers; the
// stationarity term is scaled down when multipliers are large.
KktParts kkt_residual(const NlpEvaluation& ev, const VectorXd& x, const VectorXd& lo,
                      const VectorXd& hi, const VectorXd& y_eq_in, const VectorXd& y_in_in,
                      const VectorXd& y_b_in) {
  constexpr double s_max = 100.0;
  // A failed QP leaves its multipliers empty; read those as zero.
  auto sized = [](const VectorXd& v, Eigen::Index n) {
    return v.size() == n ? v : VectorXd::Zero(n).eval();
  };
  const VectorXd y_eq = sized(y_eq_in, ev.c_eq.size());
  const VectorXd y_in = sized(y_in_in, ev.c_in.size());
  const VectorXd y_b = sized(y_b_in, x.size());
  KktParts k;
  const VectorXd r = lagrangian_gradient(ev, y_eq, y_in) - y_b;
  if (r.size() > 0) k.stationarity = r.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < y_in.size(); ++i) {
    k.complementarity = std::max(k.complementarity, std::abs(y_in[i] * ev.c_in[i]));
  }
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (y_b[j] > 0.0 && std::isfinite(lo[j])) {
      k.complementarity = std::max(k.complementarity, y_b[j] * (x[j] - lo[j]));
    } else if (y_b[j] < 0.0 && std::isfinite(hi[j])) {
      k.complementarity = std::max(k.complementarity, -y_b[j] * (hi[j] - x[j]));
    }
  }
  const double m = static_cast<double>(y_eq.size() + y_in.size() + y_b.size());
  const double ysum = y_eq.cwiseAbs().sum() + y_in.cwiseAbs().sum() + y_b.cwiseAbs().sum();
  k.scale = m > 0 ? std::max(s_max, ysum / m) / s_max : 1.0;
  return k;
}

QpProblem build_qp(const MatrixXd& H, const NlpEvaluation& ev, const VectorXd& x,
                   const VectorXd& lo, const VectorXd& hi) {
  QpProblem qp;
  qp.H = H;
  qp.g = ev.gradient;
  qp.A_eq = ev.jac_eq;
  qp.b_eq = -ev.c_eq;
  qp.A_in = ev.jac_in;
  qp.b_in = -ev.c_in;
  qp.lower = lo - x;
  qp.upper = hi - x;
  return qp;
}

void damped_bfgs(MatrixXd& B, const VectorXd& s, VectorXd y, bool first) {
  const double ss = s.squaredNorm();
  if (ss <= 0.0) return;
  if (first) {
    const double sy = s.dot(y);
    const double yy = y.squaredNorm();
    if (sy > 0.0 && yy > 0.0) B = (yy / sy) * MatrixXd::Identity(B.rows(), B.cols());
  }
  const VectorXd Bs = B * s;
  const double sBs = s.dot(Bs);
  if (!(sBs > 0.0) || !std::isfinite(sBs)) {
    B.setIdentity();
    return;
  }
  double sy = s.dot(y);
  if (sy < 0.2 * sBs) {
    const double theta = 0.8 * sBs / (sBs - sy);
    y = theta * y + (1.0 - theta) * Bs;
    sy = s.dot(y);
  }
  if (!(sy > 0.0)) {
    B.setIdentity();
    return;
  }
  B += y * y.transpose() / sy - Bs * Bs.transpose() / sBs;
  B = 0.5 * (B + B.transpose());
  if (!B.allFinite()) B.setIdentity();
}

}  // namespace

SqpResult solve_sqp(const NlpProblem& problem, const VectorXd& x0, const SqpOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = problem.num_variables();
  SqpResult res;
  auto finish = [&](SqpStatus status) {
    res.status = status;
    res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            t_start)
                      .count();
    return res;
  };
  if (x0.size() != n) return finish(SqpStatus::NumericalFailure);

  const VectorXd lo = problem.lower_bounds();
  const VectorXd hi = problem.upper_bounds();
  VectorXd x = x0.cwiseMax(lo).cwiseMin(hi);
  NlpEvaluation ev = problem.evaluate(x, true);
  res.x = x;
  if (!finite(ev, true)) return finish(SqpStatus::NumericalFailure);

  const bool use_exact = options.hessian == HessianMode::Exact && problem.has_hessian();
  MatrixXd B = MatrixXd::Identity(n, n);
  bool first_update = true;
  VectorXd y_eq = VectorXd::Zero(problem.num_equalities());
  VectorXd y_in = VectorXd::Zero(problem.num_inequalities());
  if (options.initial_y_eq.size() == y_eq.size() && options.initial_y_eq.allFinite())
    y_eq = options.initial_y_eq;
  if (options.initial_y_in.size() == y_in.size() && options.initial_y_in.allFinite())
    y_in = options.initial_y_in;
  VectorXd y_b = VectorXd::Zero(n);
  Penalty pen{VectorXd::Zero(problem.num_equalities()), VectorXd::Zero(problem.num_inequalities())};
  double tau = 0.0;
  QpOptions qp_options = options.qp;
  // Best feasible iterate, returned when the iteration cap hits an infeasible point.
  struct Best {
    VectorXd x, y_eq, y_in, y_b;
    double objective = 0.0;
    double kkt = 0.0;
  };
  std::optional<Best> best;

  for (int it = 0; it < options.max_iterations; ++it) {
    res.iterations = it;
    MatrixXd H = use_exact ? problem.hessian(x, y_eq, y_in) : B;
    if (use_exact && tau > 0.0) H.diagonal().array() += tau;
    if (!H.allFinite()) return finish(SqpStatus::NumericalFailure);
    const QpSolution qs = solve_qp(build_qp(H, ev, x, lo, hi), qp_options);
    if (qs.status == QpStatus::NumericalFailure) return finish(SqpStatus::NumericalFailure);
    if (qs.x.size() != n) return finish(SqpStatus::Infeasible);
    if (!qs.elastic) qp_options.active_hint = qs.active_set;
    const VectorXd& p = qs.x;
    y_eq = qs.y_eq;
    y_in = qs.y_in;
    y_b = qs.y_bound;

    const double viol = constraint_violation(problem, x, ev);
    const KktParts kkt = kkt_residual(ev, x, lo, hi, y_eq, y_in, y_b);
    res.x = x;
    res.objective = ev.objective;
    res.violation = viol;
    res.kkt = kkt.value();
    res.y_eq = y_eq;
    res.y_in = y_in;
    res.y_bound = y_b;

    SqpIterate rec;
    rec.iteration = it;
    rec.objective = ev.objective;
    rec.violation = viol;
    rec.kkt = kkt.value();
    rec.elastic = qs.elastic;
    if (viol <= options.constraint_tolerance && (!best || ev.objective < best->objective))
      best = Best{x, y_eq, y_in, y_b, ev.objective, kkt.value()};
    if (viol <= options.constraint_tolerance && kkt.value() <= options.kkt_tolerance) {
      res.history.push_back(rec);
      if (options.trace) {
        *options.trace << std::setw(4) << it << std::scientific << std::setprecision(6) << ' '
                       << ev.objective << ' ' << viol << ' ' << kkt.value() << " converged\n";
        *options.trace << std::defaultfloat;
      }
      return finish(SqpStatus::Optimal);
    }
    const double step_norm = p.size() > 0 ? p.cwiseAbs().maxCoeff() : 0.0;
    if (qs.elastic && qs.elastic_violation > options.constraint_tolerance &&
        step_norm <= 1e-12 * (1.0 + x.cwiseAbs().maxCoeff())) {
      res.history.push_back(rec);
      return finish(SqpStatus::Infeasible);
    }

    // Weights must dominate the multipliers for p to be a descent direction.
    // Individual weights keep a weakly priced curved constraint from
    // rejecting steps along it (Maratos).
    update_weights(pen.eq, y_eq);
    update_weights(pen.in, y_in);
    rec.penalty = pen.max();

    const double infeas = pen.infeasibility(ev);
    const double phi = ev.objective + infeas;
    rec.merit = phi;
    double phi_accepted = phi;
    double dphi = ev.gradient.dot(p) - infeas;
    if (qs.elastic) {
      // The linearization cannot remove all infeasibility; credit only what it does.
      NlpEvaluation lin = ev;
      lin.c_eq = ev.c_eq + ev.jac_eq * p;
      lin.c_in = ev.c_in + ev.jac_in * p;
      dphi = ev.gradient.dot(p) + pen.infeasibility(lin) - infeas;
    }
    if (dphi > 0.0) dphi = -p.dot(H * p);

    double alpha = 1.0;
    VectorXd x_new;
    NlpEvaluation ev_new;
    bool accepted = false;
    bool tried_soc = false;
    while (alpha >= options.min_step) {
      x_new = (x + alpha * p).cwiseMax(lo).cwiseMin(hi);
      ev_new = problem.evaluate(x_new, false);
      if (!finite(ev_new, false)) {
        alpha *= 0.5;
        continue;
      }
      const double phi_new = ev_new.objective + pen.infeasibility(ev_new);
      if (phi_new <= phi + options.armijo * alpha * dphi) {
        phi_accepted = phi_new;
        accepted = true;
        break;
      }
      if (alpha == 1.0 && !tried_soc && !qs.elastic &&
          (problem.num_equalities() + problem.num_inequalities()) > 0) {
        // Second-order correction against the Maratos effect.
        tried_soc = true;
        QpProblem soc = build_qp(H, ev, x, lo, hi);
        soc.b_eq = -(ev_new.c_eq - ev.jac_eq * p);
        soc.b_in = -(ev_new.c_in - ev.jac_in * p);
        const QpSolution qc = solve_qp(soc, qp_options);
        if (qc.status == QpStatus::Optimal) {
          const VectorXd x_soc = (x + qc.x).cwiseMax(lo).cwiseMin(hi);
          const NlpEvaluation ev_soc = problem.evaluate(x_soc, false);
          if (finite(ev_soc, false)) {
            const double phi_soc = ev_soc.objective + pen.infeasibility(ev_soc);
            if (phi_soc <= phi + options.armijo * dphi) {
              x_new = x_soc;
              phi_accepted = phi_soc;
              accepted = true;
              break;
            }
          }
        }
      }
      alpha *= 0.5;
    }
    rec.step = accepted ? alpha : 0.0;
    rec.merit_next = phi_accepted;
    if (use_exact && options.adaptive_damping) {
      if (!accepted || alpha < 0.1) {
        tau = std::max(10.0 * tau, options.damping_initial);
      } else if (alpha < 1.0) {
        tau = std::max(2.0 * tau, options.damping_initial);
      } else {
        tau = tau * 0.25 < options.damping_initial * 1e-3 ? 0.0 : tau * 0.25;
      }
    }
    res.history.push_back(rec);
    if (options.trace) {
      *options.trace << std::setw(4) << it << std::scientific << std::setprecision(6) << ' '
                     << ev.objective << ' ' << viol << ' ' << kkt.value() << ' ' << rec.step
                     << ' ' << rec.penalty << ' ' << qs.iterations << (qs.elastic ? " elastic" : "")
                     << '\n';
      *options.trace << std::defaultfloat;
    }
    if (!accepted) {
      if (use_exact && options.adaptive_damping && tau < 1e8) continue;
      if (!use_exact && !first_update) {
        // Stale quasi-Newton model: restart from the identity once more.
        B.setIdentity();
        first_update = true;
        continue;
      }
      return finish(viol > options.constraint_tolerance ? SqpStatus::Infeasible
                                                        : SqpStatus::NumericalFailure);
    }

    NlpEvaluation ev_full = problem.evaluate(x_new, true);
    if (!finite(ev_full, true)) return finish(SqpStatus::NumericalFailure);
    if (!use_exact) {
      const VectorXd s = x_new - x;
      const VectorXd yv =
          lagrangian_gradient(ev_full, y_eq, y_in) - lagrangian_gradient(ev, y_eq, y_in);
      damped_bfgs(B, s, yv, first_update);
      first_update = false;
    }
    x = x_new;
    ev = std::move(ev_full);
  }

  // Iteration cap: report the final iterate with multipliers from one more QP.
  res.iterations = options.max_iterations;
  res.x = x;
  res.objective = ev.objective;
  res.violation = constraint_violation(problem, x, ev);
  const MatrixXd H = use_exact ? problem.hessian(x, y_eq, y_in) : B;
  const QpSolution qs = solve_qp(build_qp(H, ev, x, lo, hi), qp_options);
  if (qs.status != QpStatus::NumericalFailure) {
    res.y_eq = qs.y_eq;
    res.y_in = qs.y_in;
    res.y_bound = qs.y_bound;
    res.kkt = kkt_residual(ev, x, lo, hi, qs.y_eq, qs.y_in, qs.y_bound).value();
    if (res.violation <= options.constraint_tolerance && res.kkt <= options.kkt_tolerance) {
      return finish(SqpStatus::Optimal);
    }
  }
  if (res.violation > options.constraint_tolerance) {
    // Project the last iterate onto the constraints with a few minimum-norm
    // Gauss-Newton steps; a slowly converging run usually ends close to a
    // feasible point that is better than any feasible iterate seen.
    VectorXd xp = x;
    NlpEvaluation ep = ev;
    for (int r = 0; r < 8; ++r) {
      if (constraint_violation(problem, xp, ep) <= options.constraint_tolerance) break;
      NlpEvaluation lin = ep;
      lin.gradient.setZero();
      const QpSolution qp = solve_qp(build_qp(MatrixXd::Identity(n, n), lin, xp, lo, hi), options.qp);
      if (qp.status != QpStatus::Optimal) break;
      xp = (xp + qp.x).cwiseMax(lo).cwiseMin(hi);
      ep = problem.evaluate(xp, true);
      if (!finite(ep, true)) break;
    }
    if (finite(ep, true) && constraint_violation(problem, xp, ep) <= options.constraint_tolerance &&
        (!best || ep.objective < best->objective)) {
      const KktParts k = kkt_residual(ep, xp, lo, hi, res.y_eq, res.y_in, res.y_bound);
      best = Best{xp, res.y_eq, res.y_in, res.y_bound, ep.objective, k.value()};
    }
  }
  if (best && (res.violation > options.constraint_tolerance || best->objective < res.objective)) {
    res.x = best->x;
    res.objective = best->objective;
    res.violation = constraint_violation(problem, best->x, problem.evaluate(best->x, false));
    res.y_eq = best->y_eq;
    res.y_in = best->y_in;
    res.y_bound = best->y_b;
    res.kkt = best->kkt;
  }
  return finish(SqpStatus::MaxIterations);
}

std::vector<DerivativeMismatch> check_derivatives(const NlpProblem& problem, const VectorXd& x,
                                                  double tolerance) {
  std::vector<DerivativeMismatch> out;
  const NlpEvaluation ev = problem.evaluate(x, true);
  const Eigen::Index n = x.size();
  const Eigen::Index me = ev.c_eq.size();
  const Eigen::Index mi = ev.c_in.size();
  MatrixXd fd_grad(1, n);
  MatrixXd fd_eq(me, n);
  MatrixXd fd_in(mi, n);
  const double eps_cbrt = std::cbrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = eps_cbrt * std::max(1.0, std::abs(x[j]));
    VectorXd xp = x;
    VectorXd xm = x;
    xp[j] += h;
    xm[j] -= h;
    const NlpEvaluation ep = problem.evaluate(xp, false);
    const NlpEvaluation em = problem.evaluate(xm, false);
    const double width = xp[j] - xm[j];
    fd_grad(0, j) = (ep.objective - em.objective) / width;
    if (me > 0) fd_eq.col(j) = (ep.c_eq - em.c_eq) / width;
    if (mi > 0) fd_in.col(j) = (ep.c_in - em.c_in) / width;
  }
  auto compare = [&](const char* block, const MatrixXd& analytic, const MatrixXd& numeric) {
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
      for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
        const double a = analytic(i, j);
        const double f = numeric(i, j);
        const double rel = std::abs(a - f) / std::max({1.0, std::abs(a), std::abs(f)});
        if (!(rel <= tolerance)) {
          out.push_back({block, static_cast<int>(i), static_cast<int>(j), a, f, rel});
        }
      }
    }
  };
  compare("objective", ev.gradient.transpose(), fd_grad);
  if (me > 0) compare("equality", ev.jac_eq, fd_eq);
  if (mi > 0) compare("inequality", ev.jac_in, fd_in);
  return out;
}

}  // namespace dualmpc::nlp
