#include "dualmpc/qp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace dualmpc::nlp {

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Constraints in Goldfarb-Idnani form:  C_eq' x + c_eq = 0,  C_in' x + c_in >= 0.
struct GiResult {
  QpStatus status = QpStatus::NumericalFailure;
  VectorXd x;
  VectorXd u_eq;
  VectorXd u_in;
  int iterations = 0;
  std::vector<int> active;
};

class GoldfarbIdnani {
 public:
  GoldfarbIdnani(const MatrixXd& G, const VectorXd& g, const MatrixXd& C_eq,
                 const VectorXd& c_eq, const MatrixXd& C_in, const VectorXd& c_in)
      : G_(G), g_(g), C_eq_(C_eq), c_eq_(c_eq), C_in_(C_in), c_in_(c_in),
        n_(g.size()), R_(MatrixXd::Zero(n_, n_)) {}

  GiResult solve(int max_iterations, const std::vector<int>& hint) {
    GiResult res;
    const Eigen::LLT<MatrixXd> llt(G_);
    if (llt.info() != Eigen::Success) return res;
    // J = L^-T so that J' G J = I.
    J_ = llt.matrixU().solve(MatrixXd::Identity(n_, n_));
    x_ = -llt.solve(g_);

    const Eigen::Index meq = C_eq_.cols();
    const Eigen::Index min = C_in_.cols();
    for (Eigen::Index i = 0; i < meq; ++i) {
      const VectorXd np = C_eq_.col(i);
      const VectorXd d = J_.transpose() * np;
      const VectorXd z = step_direction(d);
      const VectorXd r = dual_direction(d);
      const double zn = z.dot(np);
      double t = 0.0;
      if (std::abs(zn) > tiny(np)) t = -(np.dot(x_) + c_eq_[i]) / zn;
      x_ += t * z;
      for (Eigen::Index k = 0; k < iq_; ++k) u_[k] -= t * r[k];
      if (!add_constraint(d)) {
        // Dependent equality: consistent only if already satisfied.
        if (std::abs(np.dot(x_) + c_eq_[i]) > 1e-9 * (1.0 + std::abs(c_eq_[i]))) {
          res.status = QpStatus::Infeasible;
          return res;
        }
        continue;
      }
      u_.push_back(t);
      active_.push_back(-1 - static_cast<int>(i));
    }
    const Eigen::Index num_eq_active = iq_;

    std::vector<bool> is_active(static_cast<std::size_t>(min), false);
    std::size_t next_hint = 0;
    int iter = 0;
    while (true) {
      if (++iter > max_iterations) {
        res.iterations = iter;
        return res;
      }
      auto violation = [&](Eigen::Index j) {
        const double s = C_in_.col(j).dot(x_) + c_in_[j];
        const double tol = 1e-12 * (1.0 + std::abs(c_in_[j]) + C_in_.col(j).norm() * x_.norm());
        return s < -tol ? s : 0.0;
      };
      // First violated hinted constraint, else the most violated one; ties
      // resolved by lowest index.
      Eigen::Index p = -1;
      while (next_hint < hint.size() && p < 0) {
        const int j = hint[next_hint++];
        if (j >= 0 && j < min && !is_active[static_cast<std::size_t>(j)] && violation(j) < 0.0) p = j;
      }
      double worst = 0.0;
      if (p < 0) {
        for (Eigen::Index j = 0; j < min; ++j) {
          if (is_active[static_cast<std::size_t>(j)]) continue;
          const double s = violation(j);
          if (s < worst) {
            worst = s;
            p = j;
          }
        }
      }
      if (p < 0) break;

      const VectorXd np = C_in_.col(p);
      double u_p = 0.0;
      while (true) {
        if (++iter > max_iterations) {
          res.iterations = iter;
          return res;
        }
        const VectorXd d = J_.transpose() * np;
        const VectorXd z = step_direction(d);
        const VectorXd r = dual_direction(d);

        // Dual step length: first active inequality whose multiplier hits zero.
        double t1 = kInf;
        Eigen::Index drop = -1;
        for (Eigen::Index k = num_eq_active; k < iq_; ++k) {
          if (r[k] > 0.0) {
            const double ratio = u_[static_cast<std::size_t>(k)] / r[k];
            if (ratio < t1) {
              t1 = ratio;
              drop = k;
            }
          }
        }
        double t2 = kInf;
        const double zn = z.dot(np);
        if (z.norm() > tiny(np) && zn > 0.0) {
          t2 = -(np.dot(x_) + c_in_[p]) / zn;
        }
        const double t = std::min(t1, t2);
        if (!std::isfinite(t)) {
          res.status = QpStatus::Infeasible;
          res.iterations = iter;
          return res;
        }
        if (std::isfinite(t2)) x_ += t * z;
        for (Eigen::Index k = 0; k < iq_; ++k) u_[static_cast<std::size_t>(k)] -= t * r[k];
        u_p += t;
        if (t2 <= t1) {
          if (!add_constraint(d)) return res;
          u_.push_back(u_p);
          active_.push_back(static_cast<int>(p));
          is_active[static_cast<std::size_t>(p)] = true;
          break;
        }
        is_active[static_cast<std::size_t>(active_[static_cast<std::size_t>(drop)])] = false;
        delete_constraint(drop);
      }
    }

    res.status = QpStatus::Optimal;
    res.iterations = iter;
    res.x = x_;
    for (int a : active_)
      if (a >= 0) res.active.push_back(a);
    res.u_eq = VectorXd::Zero(meq);
    res.u_in = VectorXd::Zero(min);
    for (std::size_t k = 0; k < active_.size(); ++k) {
      const int a = active_[k];
      if (a < 0) {
        res.u_eq[-1 - a] = u_[k];
      } else {
        res.u_in[a] = u_[k];
      }
    }
    return res;
  }

 private:
  double tiny(const VectorXd& np) const {
    return 1e-14 * (1.0 + np.norm() * J_.norm());
  }

  VectorXd step_direction(const VectorXd& d) const {
    return J_.rightCols(n_ - iq_) * d.tail(n_ - iq_);
  }

  VectorXd dual_direction(const VectorXd& d) const {
    if (iq_ == 0) return VectorXd();
    return R_.topLeftCorner(iq_, iq_).triangularView<Eigen::Upper>().solve(d.head(iq_));
  }

  static void givens(double a, double b, double& c, double& s) {
    const double h = std::hypot(a, b);
    if (h == 0.0) {
      c = 1.0;
      s = 0.0;
      return;
    }
    c = a / h;
    s = b / h;
  }

  void rotate_columns(Eigen::Index i, Eigen::Index j, double c, double s) {
    const VectorXd a = J_.col(i);
    const VectorXd b = J_.col(j);
    J_.col(i) = c * a + s * b;
    J_.col(j) = -s * a + c * b;
  }

  bool add_constraint(VectorXd d) {
    for (Eigen::Index j = n_ - 1; j > iq_; --j) {
      double c = 0.0;
      double s = 0.0;
      givens(d[j - 1], d[j], c, s);
      if (s == 0.0) continue;
      d[j - 1] = std::hypot(d[j - 1], d[j]);
      d[j] = 0.0;
      rotate_columns(j - 1, j, c, s);
    }
    if (iq_ >= n_ || std::abs(d[iq_]) <= 1e-12 * (1.0 + d.norm())) return false;
    R_.col(iq_).head(iq_ + 1) = d.head(iq_ + 1);
    ++iq_;
    return true;
  }

  void delete_constraint(Eigen::Index q) {
    for (Eigen::Index k = q; k + 1 < iq_; ++k) R_.col(k) = R_.col(k + 1);
    R_.col(iq_ - 1).setZero();
    u_.erase(u_.begin() + q);
    active_.erase(active_.begin() + q);
    --iq_;
    for (Eigen::Index j = q; j < iq_; ++j) {
      double c = 0.0;
      double s = 0.0;
      givens(R_(j, j), R_(j + 1, j), c, s);
      if (s == 0.0) continue;
      for (Eigen::Index k = j; k < iq_; ++k) {
        const double a = R_(j, k);
        const double b = R_(j + 1, k);
        R_(j, k) = c * a + s * b;
        R_(j + 1, k) = -s * a + c * b;
      }
      R_(j + 1, j) = 0.0;
      rotate_columns(j, j + 1, c, s);
    }
  }

  const MatrixXd& G_;
  const VectorXd& g_;
  const MatrixXd& C_eq_;
  const VectorXd& c_eq_;
  const MatrixXd& C_in_;
  const VectorXd& c_in_;
  Eigen::Index n_;
  MatrixXd J_;
  MatrixXd R_;
  VectorXd x_;
  Eigen::Index iq_ = 0;
  std::vector<double> u_;
  std::vector<int> active_;
};

struct Expanded {
  MatrixXd C_in;
  VectorXd c_in;
  std::vector<int> bound_var;   // variable index per bound row
  std::vector<double> bound_sign;
  Eigen::Index num_general = 0;
};

// General inequalities followed by finite bounds, all as  C' x + c >= 0.
Expanded expand_inequalities(const QpProblem& qp) {
  const Eigen::Index n = qp.num_variables();
  Expanded e;
  e.num_general = qp.A_in.rows();
  std::vector<std::pair<int, double>> rows;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (qp.lower.size() == n && std::isfinite(qp.lower[j])) rows.emplace_back(j, 1.0);
    if (qp.upper.size() == n && std::isfinite(qp.upper[j])) rows.emplace_back(j, -1.0);
  }
  const Eigen::Index m = e.num_general + static_cast<Eigen::Index>(rows.size());
  e.C_in = MatrixXd::Zero(n, m);
  e.c_in = VectorXd::Zero(m);
  if (e.num_general > 0) {
    e.C_in.leftCols(e.num_general) = qp.A_in.transpose();
    e.c_in.head(e.num_general) = -qp.b_in;
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [j, sign] = rows[r];
    const Eigen::Index col = e.num_general + static_cast<Eigen::Index>(r);
    e.C_in(j, col) = sign;
    e.c_in[col] = sign > 0 ? -qp.lower[j] : qp.upper[j];
    e.bound_var.push_back(j);
    e.bound_sign.push_back(sign);
  }
  return e;
}

MatrixXd regularize(const MatrixXd& H, double min_curvature, bool& shifted) {
  const Eigen::Index n = H.rows();
  MatrixXd sym = 0.5 * (H + H.transpose());
  const double scale = std::max(1.0, sym.cwiseAbs().rowwise().sum().maxCoeff());
  const double floor = min_curvature * scale;
  // Cheap test first: H - floor I positive definite means no shift.
  const Eigen::LLT<MatrixXd> llt(sym - floor * MatrixXd::Identity(n, n));
  if (llt.info() == Eigen::Success) {
    shifted = false;
    return sym;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  shifted = lmin < floor;
  if (shifted) sym += (floor - lmin) * MatrixXd::Identity(n, n);
  return sym;
}

QpSolution solve_core(const QpProblem& qp, const MatrixXd& H, int max_iterations,
                      const std::vector<int>& hint = {}) {
  const Eigen::Index n = qp.num_variables();
  const Expanded e = expand_inequalities(qp);
  const MatrixXd C_eq = qp.A_eq.rows() > 0 ? MatrixXd(qp.A_eq.transpose()) : MatrixXd(n, 0);
  const VectorXd c_eq = qp.A_eq.rows() > 0 ? VectorXd(-qp.b_eq) : VectorXd(0);
  GoldfarbIdnani gi(H, qp.g, C_eq, c_eq, e.C_in, e.c_in);
  const int cap = max_iterations > 0 ? max_iterations
                                     : static_cast<int>(20 * (n + C_eq.cols() + e.C_in.cols()) + 100);
  const GiResult r = gi.solve(cap, hint);

  QpSolution sol;
  sol.status = r.status;
  sol.iterations = r.iterations;
  if (r.status != QpStatus::Optimal) return sol;
  sol.x = r.x;
  sol.active_set = r.active;
  sol.y_eq = r.u_eq;
  sol.y_in = r.u_in.head(e.num_general);
  sol.y_bound = VectorXd::Zero(n);
  for (std::size_t k = 0; k < e.bound_var.size(); ++k) {
    sol.y_bound[e.bound_var[k]] += e.bound_sign[k] * r.u_in[e.num_general + static_cast<Eigen::Index>(k)];
  }
  sol.objective = 0.5 * sol.x.dot(qp.H * sol.x) + qp.g.dot(sol.x);
  if (!sol.x.allFinite() || sol.x.cwiseAbs().maxCoeff() > 1e12) {
    sol.status = QpStatus::NumericalFailure;
  }
  return sol;
}

// l1 relaxation of the general constraints: A_eq x + p - q = b_eq, A_in x + t >= b_in.
QpSolution solve_elastic(const QpProblem& qp, const MatrixXd& H, const QpOptions& options) {
  const Eigen::Index n = qp.num_variables();
  const Eigen::Index me = qp.A_eq.rows();
  const Eigen::Index mi = qp.A_in.rows();
  const Eigen::Index ns = 2 * me + mi;
  const Eigen::Index nt = n + ns;
  const double rho = options.elastic_penalty;

  QpProblem ex;
  ex.H = MatrixXd::Zero(nt, nt);
  ex.H.topLeftCorner(n, n) = H;
  // Unit-scale curvature on the slacks: the dual method starts from the
  // unconstrained minimizer, so a tiny curvature would place it near -rho/curv
  // and lose every digit to cancellation. With t >= 0 active or the linear term
  // dominating, the extra term only raises the effective penalty to rho + t.
  const double slack_curv = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
  ex.H.bottomRightCorner(ns, ns) = slack_curv * MatrixXd::Identity(ns, ns);
  ex.g = VectorXd::Constant(nt, rho);
  ex.g.head(n) = qp.g;
  ex.A_eq = MatrixXd::Zero(me, nt);
  if (me > 0) {
    ex.A_eq.leftCols(n) = qp.A_eq;
    ex.A_eq.block(0, n, me, me) = MatrixXd::Identity(me, me);
    ex.A_eq.block(0, n + me, me, me) = -MatrixXd::Identity(me, me);
  }
  ex.b_eq = qp.b_eq;
  ex.A_in = MatrixXd::Zero(mi, nt);
  if (mi > 0) {
    ex.A_in.leftCols(n) = qp.A_in;
    ex.A_in.block(0, n + 2 * me, mi, mi) = MatrixXd::Identity(mi, mi);
  }
  ex.b_in = qp.b_in;
  ex.lower = VectorXd::Zero(nt);
  ex.upper = VectorXd::Constant(nt, kInf);
  ex.lower.head(n) = qp.lower.size() == n ? qp.lower : VectorXd::Constant(n, -kInf);
  ex.upper.head(n) = qp.upper.size() == n ? qp.upper : VectorXd::Constant(n, kInf);

  QpSolution full = solve_core(ex, ex.H, options.max_iterations);
  QpSolution sol;
  sol.status = full.status == QpStatus::Optimal ? QpStatus::Infeasible : full.status;
  sol.iterations = full.iterations;
  sol.elastic = true;
  if (full.status != QpStatus::Optimal) return sol;
  sol.x = full.x.head(n);
  sol.y_eq = full.y_eq;
  sol.y_in = full.y_in;
  sol.y_bound = full.y_bound.head(n);
  sol.elastic_violation = full.x.tail(ns).sum();
  sol.objective = 0.5 * sol.x.dot(qp.H * sol.x) + qp.g.dot(sol.x);
  return sol;
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, const QpOptions& options) {
  const Eigen::Index n = qp.num_variables();
  QpSolution bad;
  if (qp.H.rows() != n || qp.H.cols() != n || qp.A_eq.rows() != qp.b_eq.size() ||
      qp.A_in.rows() != qp.b_in.size() || (qp.A_eq.rows() > 0 && qp.A_eq.cols() != n) ||
      (qp.A_in.rows() > 0 && qp.A_in.cols() != n) ||
      (qp.lower.size() != 0 && qp.lower.size() != n) ||
      (qp.upper.size() != 0 && qp.upper.size() != n)) {
    return bad;
  }
  if (!qp.H.allFinite() || !qp.g.allFinite()) return bad;
  for (Eigen::Index j = 0; j < qp.lower.size() && j < qp.upper.size(); ++j) {
    if (qp.lower[j] > qp.upper[j]) {
      bad.status = QpStatus::Infeasible;
      return bad;
    }
  }

  bool shifted = false;
  const MatrixXd H = regularize(qp.H, options.min_curvature, shifted);
  QpSolution sol = solve_core(qp, H, options.max_iterations, options.active_hint);
  // A singular H regularized by a 1e-10 shift sends unbounded directions to ~1e10.
  if (shifted && sol.status == QpStatus::Optimal && sol.x.cwiseAbs().maxCoeff() > 1e8) {
    sol.status = QpStatus::NumericalFailure;
  }
  if (sol.status == QpStatus::Infeasible && (qp.A_eq.rows() > 0 || qp.A_in.rows() > 0)) {
    return solve_elastic(qp, H, options);
  }
  return sol;
}

double qp_kkt_residual(const QpProblem& qp, const QpSolution& sol) {
  const Eigen::Index n = qp.num_variables();
  if (sol.x.size() != n) return kInf;
  VectorXd stat = qp.H * sol.x + qp.g - sol.y_bound;
  double r = 0.0;
  if (qp.A_eq.rows() > 0) {
    stat -= qp.A_eq.transpose() * sol.y_eq;
    r = std::max(r, (qp.A_eq * sol.x - qp.b_eq).cwiseAbs().maxCoeff());
  }
  if (qp.A_in.rows() > 0) {
    stat -= qp.A_in.transpose() * sol.y_in;
    const VectorXd s = qp.A_in * sol.x - qp.b_in;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      r = std::max({r, -s[i], -sol.y_in[i], std::abs(sol.y_in[i] * s[i])});
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lo = qp.lower.size() == n ? qp.lower[j] : -kInf;
    const double hi = qp.upper.size() == n ? qp.upper[j] : kInf;
    r = std::max({r, lo - sol.x[j], sol.x[j] - hi});
    const double y = sol.y_bound[j];
    if (y > 0.0) r = std::max(r, std::isfinite(lo) ? std::abs(y * (sol.x[j] - lo)) : y);
    if (y < 0.0) r = std::max(r, std::isfinite(hi) ? std::abs(y * (hi - sol.x[j])) : -y);
  }
  if (n > 0) r = std::max(r, stat.cwiseAbs().maxCoeff());
  return r;
}

}  // namespace dualmpc::nlp
