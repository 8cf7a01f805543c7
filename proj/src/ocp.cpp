#include "dualmpc/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualmpc/error.hpp"

namespace dualmpc::ocp {

namespace {

// Curvature given to slack variables in the QP model. Slacks enter the NLP
// linearly; without curvature the QP's unconstrained start sits at -rho/eps.
constexpr double kSlackCurvature = 1.0;
constexpr double kFreeCurvature = 1e-4;
constexpr double kFeasibleTol = 1e-6;

Matrix2d unsym3(const Eigen::Vector3d& s) {
  Matrix2d m;
  m << s[0], s[1], s[1], s[2];
  return m;
}

void require_finite(const setops::BoxSet& b, const char* what) {
  if (!b.lower.allFinite() || !b.upper.allFinite())
    throw Error(ErrorKind::InvalidArgument, std::string(what) + " must be bounded");
}

}  // namespace

double stage_cost(const CostWeights& w, const Vector2d& x, double u) {
  const Vector2d e = x - w.x_ref;
  return e.dot(w.Q * e) + w.R * u * u;
}

double terminal_cost(const CostWeights& w, const Vector2d& x) {
  const Vector2d e = x - w.x_ref;
  return e.dot(w.P * e);
}

double trajectory_cost(const CostWeights& w, const std::vector<Vector2d>& x, const VectorXd& u) {
  const auto N = static_cast<std::size_t>(u.size());
  if (x.size() != N + 1) throw Error(ErrorKind::InvalidArgument, "trajectory_cost: need N+1 states");
  double J = 0.0;
  for (std::size_t i = 0; i < N; ++i) J += stage_cost(w, x[i], u[static_cast<Eigen::Index>(i)]);
  return J + terminal_cost(w, x[N]);
}

OcpData make_ocp_data(const model::DiscreteModel& model, const OcpSettings& s) {
  if (s.horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
  if (s.slack_penalty <= 0.0) throw Error(ErrorKind::InvalidArgument, "slack penalty must be > 0");
  require_finite(s.X, "state set");
  require_finite(s.U, "input set");
  OcpData d;
  d.model = model;
  d.settings = s;
  const MatrixXd B = model.Bu;
  d.lqr = setops::solve_dare(model.A, B, s.Q, MatrixXd::Constant(1, 1, s.R));
  d.K = s.gain == TighteningGain::Lqr ? d.lqr.K : MatrixXd::Zero(1, 2);
  const int N = s.horizon;
  d.sets = setops::tighten_sequences(model.A, B, d.K, s.X, s.U, s.W, N);
  const setops::BoxSet u_terminal =
      setops::pontryagin_difference(s.U, d.sets.reach[static_cast<std::size_t>(N)].linear_map(d.K));
  if (u_terminal.empty()) throw Error(ErrorKind::InfeasibleTightening, "terminal input set empty");
  d.terminal = setops::compute_rci(model.A, B, d.K, d.sets.state[static_cast<std::size_t>(N)],
                                   u_terminal, d.sets.terminal_disturbance);

  d.a_pow.assign(static_cast<std::size_t>(N) + 1, Matrix2d::Identity());
  d.gamma.assign(static_cast<std::size_t>(N) + 1, MatrixXd::Zero(2, N));
  for (int i = 0; i < N; ++i) {
    const auto k = static_cast<std::size_t>(i);
    d.a_pow[k + 1] = model.A * d.a_pow[k];
    d.gamma[k + 1] = model.A * d.gamma[k];
    d.gamma[k + 1].col(i) += model.Bu;
  }
  return d;
}

CostWeights make_weights(const OcpData& data, const Vector2d& x_ref, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw Error(ErrorKind::InvalidArgument, "lambda must lie in [0,1]");
  CostWeights w;
  w.Q = data.settings.Q;
  w.R = data.settings.R;
  w.P = data.lqr.P;
  w.x_ref = x_ref;
  w.lambda = lambda;
  return w;
}

CovariancePropagation propagate_covariance(const model::DiscreteModel& model,
                                           const gp::GpModel& gp,
                                           const std::vector<Vector2d>& x_hat,
                                           const VectorXd& u_hat) {
  if (x_hat.empty() || (u_hat.size() > 0 && x_hat.size() != static_cast<std::size_t>(u_hat.size()) + 1))
    throw Error(ErrorKind::InvalidArgument, "propagate_covariance: inconsistent trajectory lengths");
  CovariancePropagation out;
  out.state.assign(x_hat.size(), Matrix2d::Zero());
  out.residual.resize(x_hat.size());
  const Matrix2d G = model.Bg * model.Bg.transpose();
  for (std::size_t i = 0; i < x_hat.size(); ++i) {
    out.residual[i] = gp.predict(x_hat[i][0]).variance;
    if (i + 1 < x_hat.size())
      out.state[i + 1] = model.A * out.state[i] * model.A.transpose() + G * out.residual[i];
  }
  return out;
}

setops::BoxSet adaptive_tighten(const setops::BoxSet& X, const Matrix2d& cov, double eps) {
  setops::BoxSet out = X;
  for (int j = 0; j < 2; ++j) {
    const double t = 2.0 * std::sqrt(std::max(cov(j, j), 0.0) + eps);
    out.lower[j] += t;
    out.upper[j] -= t;
  }
  return out;
}

const char* to_string(Formulation f) {
  switch (f) {
    case Formulation::Rmpc: return "rmpc";
    case Formulation::Passive: return "passive";
    case Formulation::Active: return "active";
    case Formulation::SingleBaseline: return "single_baseline";
    case Formulation::SingleActive: return "single_active";
  }
  return "?";
}

// --- OcpProblem -------------------------------------------------------------

OcpProblem::OcpProblem(const OcpData& data, Formulation form, const CostWeights& weights,
                       const gp::GpModel* gp, const Vector2d& x0, const Budget& budget)
    : data_(data), form_(form), w_(weights), gp_(gp), x0_(x0), budget_(budget), N_(data.horizon()) {
  if (has_performance() && gp_ == nullptr)
    throw Error(ErrorKind::InvalidArgument, std::string(to_string(form)) + " needs a GP model");

  const auto& sets = data_.sets;
  const int nf = data_.terminal.num_faces();
  if (form_ == Formulation::Rmpc) {
    n_ = N_;
  } else if (form_ == Formulation::Passive || form_ == Formulation::Active) {
    slack_off_ = 2 * N_ - 1;
    num_slack_ = 4 * N_;
    n_ = slack_off_ + num_slack_;
  } else {
    n_ = N_;
  }
  if (learning()) {
    delta_idx_ = n_;
    ++n_;
    m_eq_ = 1;
  }
  if (has_contingency()) m_in_ += 4 * N_ + nf;
  if (soft_performance()) m_in_ += 4 * N_;
  if (form_ == Formulation::SingleBaseline || form_ == Formulation::SingleActive) m_in_ += 4 * N_ + nf;

  lower_ = VectorXd::Constant(n_, -std::numeric_limits<double>::infinity());
  upper_ = VectorXd::Constant(n_, std::numeric_limits<double>::infinity());
  for (int i = 0; i < N_; ++i) {
    lower_[i] = sets.input[static_cast<std::size_t>(i)].lower[0];
    upper_[i] = sets.input[static_cast<std::size_t>(i)].upper[0];
  }
  if (slack_off_ >= 0) {
    for (int l = 1; l < N_; ++l) {
      lower_[bar_index(l)] = sets.input[static_cast<std::size_t>(l)].lower[0];
      upper_[bar_index(l)] = sets.input[static_cast<std::size_t>(l)].upper[0];
    }
    lower_.segment(slack_off_, num_slack_).setZero();
  }
  if (delta_idx_ >= 0) upper_[delta_idx_] = std::min(budget_.bound_mean, budget_.bound_max);

  const Matrix2d& A = data_.model.A;
  const double a = A(0, 0), b = A(0, 1), c = A(1, 0), d = A(1, 1);
  cov_map_ << a * a, 2 * a * b, b * b,
              a * c, a * d + b * c, b * d,
              c * c, 2 * c * d, d * d;
  const Vector2d& g = data_.model.Bg;
  cov_in_ << g[0] * g[0], g[0] * g[1], g[1] * g[1];
}

bool OcpProblem::has_performance() const { return form_ != Formulation::Rmpc; }

bool OcpProblem::has_contingency() const {
  return form_ == Formulation::Rmpc || form_ == Formulation::Passive || form_ == Formulation::Active;
}

bool OcpProblem::soft_performance() const {
  return form_ == Formulation::Passive || form_ == Formulation::Active;
}

bool OcpProblem::learning() const {
  return form_ == Formulation::Active || form_ == Formulation::SingleActive;
}

int OcpProblem::bar_index(int l) const {
  if (form_ == Formulation::Rmpc || l == 0) return l;
  return N_ + l - 1;
}

VectorXd OcpProblem::u_hat(const VectorXd& v) const {
  if (!has_performance()) return VectorXd();
  return v.head(N_);
}

VectorXd OcpProblem::u_bar(const VectorXd& v) const {
  if (!has_contingency()) return VectorXd();
  VectorXd u(N_);
  for (int l = 0; l < N_; ++l) u[l] = v[bar_index(l)];
  return u;
}

void OcpProblem::scatter_bar(const VectorXd& g_bar, VectorXd& grad) const {
  for (int l = 0; l < N_; ++l) grad[bar_index(l)] += g_bar[l];
}

std::vector<Vector2d> OcpProblem::contingency_states(const VectorXd& u) const {
  std::vector<Vector2d> x(static_cast<std::size_t>(N_) + 1);
  for (int i = 0; i <= N_; ++i) {
    const auto k = static_cast<std::size_t>(i);
    x[k] = data_.a_pow[k] * x0_ + data_.gamma[k] * u;
  }
  return x;
}

OcpProblem::PerformanceRollout OcpProblem::performance_rollout(const VectorXd& u,
                                                               bool derivatives) const {
  const auto n = static_cast<std::size_t>(N_) + 1;
  const model::DiscreteModel& m = data_.model;
  PerformanceRollout r;
  r.x.resize(n);
  r.gp.resize(n);
  r.cov.assign(n, Matrix2d::Zero());
  if (derivatives) {
    r.dx.assign(n, MatrixXd::Zero(2, N_));
    r.dcov.assign(n, Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, N_));
  }
  r.x[0] = x0_;
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double z = r.x[i][0];
    if (derivatives) {
      r.gp[i] = gp_->predict_second_order(z);
    } else {
      const gp::GpPrediction p = gp_->predict(z);
      r.gp[i].mean = p.mean;
      r.gp[i].variance = p.variance;
    }
    if (i + 1 == n) break;
    const gp::GpSecondOrder& q = r.gp[i];
    const double ui = u[static_cast<Eigen::Index>(i)];
    r.x[i + 1] = m.A * r.x[i] + m.Bu * ui + m.Bg * q.mean;
    s = cov_map_ * s + cov_in_ * q.variance;
    r.cov[i + 1] = unsym3(s);
    if (derivatives) {
      const Eigen::RowVectorXd dz = r.dx[i].row(0);
      r.dx[i + 1] = m.A * r.dx[i] + m.Bg * (q.dmean * dz);
      r.dx[i + 1].col(static_cast<Eigen::Index>(i)) += m.Bu;
      r.dcov[i + 1] = cov_map_ * r.dcov[i] + cov_in_ * (q.dvariance * dz);
    }
  }
  return r;
}

void OcpProblem::add_cost_gradient(const std::vector<Vector2d>& x, const std::vector<MatrixXd>& dx,
                                   const VectorXd& u, double scale, VectorXd& g) const {
  for (int i = 0; i < N_; ++i) {
    const auto k = static_cast<std::size_t>(i);
    g += scale * 2.0 * dx[k].transpose() * (w_.Q * (x[k] - w_.x_ref));
    g[i] += scale * 2.0 * w_.R * u[i];
  }
  const auto kN = static_cast<std::size_t>(N_);
  g += scale * 2.0 * dx[kN].transpose() * (w_.P * (x[kN] - w_.x_ref));
}

MatrixXd OcpProblem::cost_gauss_newton(const std::vector<MatrixXd>& dx) const {
  MatrixXd H = 2.0 * w_.R * MatrixXd::Identity(N_, N_);
  for (int i = 1; i < N_; ++i) {
    const auto k = static_cast<std::size_t>(i);
    H.noalias() += 2.0 * dx[k].transpose() * w_.Q * dx[k];
  }
  const auto kN = static_cast<std::size_t>(N_);
  H.noalias() += 2.0 * dx[kN].transpose() * w_.P * dx[kN];
  return H;
}

nlp::NlpEvaluation OcpProblem::evaluate(const VectorXd& v, bool derivatives) const {
  nlp::NlpEvaluation ev;
  ev.objective = 0.0;
  ev.c_eq = VectorXd::Zero(m_eq_);
  ev.c_in = VectorXd::Zero(m_in_);
  if (derivatives) {
    ev.gradient = VectorXd::Zero(n_);
    ev.jac_eq = MatrixXd::Zero(m_eq_, n_);
    ev.jac_in = MatrixXd::Zero(m_in_, n_);
  }
  const auto& sets = data_.sets;
  const setops::Polytope& T = data_.terminal;
  const int nf = T.num_faces();
  int row = 0;

  if (has_contingency()) {
    const VectorXd ub = u_bar(v);
    const std::vector<Vector2d> xb = contingency_states(ub);
    const double scale = form_ == Formulation::Rmpc ? 1.0
                         : form_ == Formulation::Passive ? w_.lambda : 0.0;
    if (scale != 0.0) {
      ev.objective += scale * trajectory_cost(w_, xb, ub);
      if (derivatives) {
        VectorXd g = VectorXd::Zero(N_);
        add_cost_gradient(xb, data_.gamma, ub, scale, g);
        scatter_bar(g, ev.gradient);
      }
    }
    for (int i = 1; i <= N_; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const setops::BoxSet& Xi = sets.state[k];
      for (int j = 0; j < 2; ++j) {
        ev.c_in[row] = xb[k][j] - Xi.lower[j];
        ev.c_in[row + 1] = Xi.upper[j] - xb[k][j];
        if (derivatives) {
          for (int l = 0; l < N_; ++l) {
            ev.jac_in(row, bar_index(l)) += data_.gamma[k](j, l);
            ev.jac_in(row + 1, bar_index(l)) -= data_.gamma[k](j, l);
          }
        }
        row += 2;
      }
    }
    const auto kN = static_cast<std::size_t>(N_);
    const VectorXd h = T.offsets - T.normals * xb[kN];
    ev.c_in.segment(row, nf) = h;
    if (derivatives) {
      const MatrixXd J = -T.normals * data_.gamma[kN];
      for (int l = 0; l < N_; ++l) ev.jac_in.block(row, bar_index(l), nf, 1) += J.col(l);
    }
    row += nf;
  }

  if (has_performance()) {
    const VectorXd uh = u_hat(v);
    const PerformanceRollout r = performance_rollout(uh, derivatives);
    const double Jh = trajectory_cost(w_, r.x, uh);
    VectorXd gJ;
    if (derivatives) {
      gJ = VectorXd::Zero(N_);
      add_cost_gradient(r.x, r.dx, uh, 1.0, gJ);
    }
    if (form_ == Formulation::Passive || form_ == Formulation::SingleBaseline) {
      const double scale = form_ == Formulation::Passive ? 1.0 - w_.lambda : 1.0;
      ev.objective += scale * Jh;
      if (derivatives) ev.gradient.head(N_) += scale * gJ;
    }
    if (learning()) {
      for (std::size_t i = 0; i < r.gp.size(); ++i) {
        ev.objective -= r.gp[i].variance;
        if (derivatives) ev.gradient.head(N_) -= r.gp[i].dvariance * r.dx[i].row(0).transpose();
      }
      ev.c_eq[0] = Jh - budget_.J_B - v[delta_idx_];
      if (derivatives) {
        ev.jac_eq.row(0).head(N_) = gJ.transpose();
        ev.jac_eq(0, delta_idx_) = -1.0;
      }
    }
    if (soft_performance()) {
      const setops::BoxSet& X = data_.settings.X;
      const double eps = data_.settings.tightening_eps;
      // The slack penalty belongs to the performance-branch cost and carries its weight.
      const double rho = data_.settings.slack_penalty * (form_ == Formulation::Passive ? 1.0 - w_.lambda : 1.0);
      for (int i = 1; i <= N_; ++i) {
        const auto k = static_cast<std::size_t>(i);
        for (int j = 0; j < 2; ++j) {
          const int sl = slack_off_ + 4 * (i - 1) + 2 * j;
          const double root = std::sqrt(std::max(r.cov[k](j, j), 0.0) + eps);
          const double t = 2.0 * root;
          ev.c_in[row] = r.x[k][j] - (X.lower[j] + t) + v[sl];
          ev.c_in[row + 1] = (X.upper[j] - t) - r.x[k][j] + v[sl + 1];
          if (derivatives) {
            const Eigen::RowVectorXd dt = r.dcov[k].row(j == 0 ? 0 : 2) / root;
            ev.jac_in.row(row).head(N_) = r.dx[k].row(j) - dt;
            ev.jac_in.row(row + 1).head(N_) = -r.dx[k].row(j) - dt;
            ev.jac_in(row, sl) = 1.0;
            ev.jac_in(row + 1, sl + 1) = 1.0;
          }
          row += 2;
        }
      }
      ev.objective += rho * v.segment(slack_off_, num_slack_).sum();
      if (derivatives) ev.gradient.segment(slack_off_, num_slack_).setConstant(rho);
    }
    if (form_ == Formulation::SingleBaseline || form_ == Formulation::SingleActive) {
      for (int i = 1; i <= N_; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const setops::BoxSet& Xi = sets.state[k];
        for (int j = 0; j < 2; ++j) {
          ev.c_in[row] = r.x[k][j] - Xi.lower[j];
          ev.c_in[row + 1] = Xi.upper[j] - r.x[k][j];
          if (derivatives) {
            ev.jac_in.row(row).head(N_) = r.dx[k].row(j);
            ev.jac_in.row(row + 1).head(N_) = -r.dx[k].row(j);
          }
          row += 2;
        }
      }
      const auto kN = static_cast<std::size_t>(N_);
      ev.c_in.segment(row, nf) = T.offsets - T.normals * r.x[kN];
      if (derivatives) ev.jac_in.block(row, 0, nf, N_) = -T.normals * r.dx[kN];
      row += nf;
    }
  }
  return ev;
}

MatrixXd OcpProblem::hessian(const VectorXd& v, const VectorXd& y_eq, const VectorXd&) const {
  MatrixXd H = MatrixXd::Zero(n_, n_);
  if (has_contingency()) {
    const double scale = form_ == Formulation::Rmpc ? 1.0
                         : form_ == Formulation::Passive ? w_.lambda : 0.0;
    if (scale != 0.0) {
      const MatrixXd G = scale * cost_gauss_newton(data_.gamma);
      for (int a = 0; a < N_; ++a)
        for (int b = 0; b < N_; ++b) H(bar_index(a), bar_index(b)) += G(a, b);
    } else {
      for (int l = 1; l < N_; ++l) H(bar_index(l), bar_index(l)) += kFreeCurvature;
    }
  }
  if (has_performance()) {
    const PerformanceRollout r = performance_rollout(u_hat(v), true);
    double scale = 0.0;
    if (form_ == Formulation::Passive) scale = 1.0 - w_.lambda;
    if (form_ == Formulation::SingleBaseline) scale = 1.0;
    // The budget multiplier is nonpositive at a solution; its magnitude weights
    // the curvature of J, as in the Lagrangian Hessian.
    if (learning()) scale = std::max(y_eq.size() > 0 ? std::abs(y_eq[0]) : 0.0, 1e-12);
    H.topLeftCorner(N_, N_) += scale * cost_gauss_newton(r.dx);
    if (learning()) {
      for (std::size_t i = 1; i < r.gp.size(); ++i) {
        const double c = std::max(-r.gp[i].d2variance, 0.0);
        if (c > 0.0) {
          const Eigen::RowVectorXd s = r.dx[i].row(0);
          H.topLeftCorner(N_, N_).noalias() += c * s.transpose() * s;
        }
      }
    }
  }
  if (slack_off_ >= 0) H.diagonal().segment(slack_off_, num_slack_).array() += kSlackCurvature;
  if (delta_idx_ >= 0) H(delta_idx_, delta_idx_) += kFreeCurvature;
  return H;
}

VectorXd OcpProblem::initial_point(const Guess& guess) const {
  VectorXd v = VectorXd::Zero(n_);
  if (has_performance()) {
    if (guess.u_hat.size() != N_) throw Error(ErrorKind::InvalidArgument, "guess: u_hat length");
    v.head(N_) = guess.u_hat;
  }
  if (has_contingency()) {
    if (guess.u_bar.size() != N_) throw Error(ErrorKind::InvalidArgument, "guess: u_bar length");
    for (int l = (has_performance() ? 1 : 0); l < N_; ++l) v[bar_index(l)] = guess.u_bar[l];
  }
  v = v.cwiseMax(lower_).cwiseMin(upper_);
  if (soft_performance() || learning()) {
    // Slacks at their smallest feasible values, Delta consistent with J.
    if (slack_off_ >= 0) v.segment(slack_off_, num_slack_).setZero();
    if (delta_idx_ >= 0) v[delta_idx_] = 0.0;
    const nlp::NlpEvaluation ev = evaluate(v, false);
    if (soft_performance()) {
      const int first = has_contingency() ? 4 * N_ + data_.terminal.num_faces() : 0;
      for (int k = 0; k < num_slack_; ++k)
        v[slack_off_ + k] = std::max(0.0, -ev.c_in[first + k]);
    }
    if (delta_idx_ >= 0) v[delta_idx_] = std::min(ev.c_eq[0], upper_[delta_idx_]);
  }
  return v;
}

// --- solves ---------------------------------------------------------------

Guess hover_guess(const OcpData& data, const Vector2d& x_k) {
  const double u = model::nominal_equilibrium_input(data.model, x_k[0]);
  Guess g;
  g.u_hat = VectorXd::Constant(data.horizon(), u);
  g.u_bar = g.u_hat;
  return g;
}

Guess shift_guess(const OcpSolution& prev) {
  auto shift = [](const VectorXd& u) {
    VectorXd s(u.size());
    if (u.size() == 0) return s;
    s.head(u.size() - 1) = u.tail(u.size() - 1);
    s[u.size() - 1] = u[u.size() - 1];
    return s;
  };
  Guess g;
  g.u_hat = shift(prev.u_hat.size() > 0 ? prev.u_hat : prev.u_bar);
  g.u_bar = shift(prev.u_bar.size() > 0 ? prev.u_bar : prev.u_hat);
  return g;
}

OcpSolution solve_ocp(const OcpData& data, Formulation form, const CostWeights& weights,
                      const gp::GpModel* gp, const Vector2d& x_k, const Guess& guess,
                      const nlp::SqpOptions& options, const Budget& budget) {
  if (!x_k.allFinite() || !data.settings.X.contains(x_k, 1e-9))
    throw Error(ErrorKind::RmpcInfeasible, "state outside the state constraint set");
  const OcpProblem problem(data, form, weights, gp, x_k, budget);
  const VectorXd v0 = problem.initial_point(guess);
  const nlp::SqpResult res = nlp::solve_sqp(problem, v0, options);

  OcpSolution sol;
  sol.formulation = form;
  sol.status = res.status;
  sol.variables = res.x;
  sol.y_eq = res.y_eq;
  sol.y_in = res.y_in;
  sol.kkt = res.kkt;
  sol.violation = res.violation;
  sol.iterations = res.iterations;
  sol.solve_ms = res.wall_ms;
  sol.feasible = res.x.allFinite() && res.violation <= kFeasibleTol;
  if (!res.x.allFinite()) return sol;

  const VectorXd& v = res.x;
  sol.u_applied = v[0];
  if (problem.has_contingency()) {
    sol.u_bar = problem.u_bar(v);
    sol.x_bar = problem.contingency_states(sol.u_bar);
    sol.J_bar = trajectory_cost(weights, sol.x_bar, sol.u_bar);
  }
  if (problem.has_performance()) {
    sol.u_hat = problem.u_hat(v);
    const OcpProblem::PerformanceRollout r = problem.performance_rollout(sol.u_hat, false);
    sol.x_hat = r.x;
    sol.state_cov = r.cov;
    sol.gp_var.reserve(r.gp.size());
    for (const auto& q : r.gp) {
      sol.gp_var.push_back(q.variance);
      sol.H -= q.variance;
    }
    sol.J_hat = trajectory_cost(weights, sol.x_hat, sol.u_hat);
  } else {
    sol.u_hat = sol.u_bar;
    sol.x_hat = sol.x_bar;
  }
  if (problem.num_slacks() > 0) {
    sol.slacks = v.segment(problem.slack_offset(), problem.num_slacks());
    sol.slack_sum = sol.slacks.sum();
  }
  if (problem.delta_index() >= 0) sol.Delta = v[problem.delta_index()];
  sol.objective = res.objective;
  return sol;
}

namespace {

OcpSolution require_feasible(OcpSolution sol, const char* what) {
  if (!sol.feasible)
    throw Error(ErrorKind::RmpcInfeasible,
                std::string(what) + " infeasible (" + nlp::to_string(sol.status) +
                    ", violation " + std::to_string(sol.violation) + ")");
  return sol;
}

}  // namespace

OcpSolution solve_rmpc(const OcpData& data, const CostWeights& weights, const Vector2d& x_k,
                       const Guess& guess, const nlp::SqpOptions& options) {
  return require_feasible(solve_ocp(data, Formulation::Rmpc, weights, nullptr, x_k, guess, options),
                          "rmpc");
}

OcpSolution solve_passive(const OcpData& data, const CostWeights& weights, const gp::GpModel& gp,
                          const Vector2d& x_k, const Guess& guess, const nlp::SqpOptions& options) {
  return require_feasible(
      solve_ocp(data, Formulation::Passive, weights, &gp, x_k, guess, options), "contingency branch");
}

OcpSolution solve_active(const OcpData& data, const CostWeights& weights, const gp::GpModel& gp,
                         const Vector2d& x_k, const OcpSolution& passive, const Budget& budget,
                         const nlp::SqpOptions& options) {
  Guess g{passive.u_hat, passive.u_bar};
  return solve_ocp(data, Formulation::Active, weights, &gp, x_k, g, options, budget);
}

OcpSolution solve_single_baseline(const OcpData& data, const CostWeights& weights,
                                  const gp::GpModel& gp, const Vector2d& x_k, const Guess& guess,
                                  const nlp::SqpOptions& options) {
  return require_feasible(
      solve_ocp(data, Formulation::SingleBaseline, weights, &gp, x_k, guess, options),
      "single-horizon baseline");
}

OcpSolution solve_single_active(const OcpData& data, const CostWeights& weights,
                                const gp::GpModel& gp, const Vector2d& x_k,
                                const OcpSolution& baseline, const Budget& budget,
                                const nlp::SqpOptions& options) {
  Guess g{baseline.u_hat, baseline.u_hat};
  return solve_ocp(data, Formulation::SingleActive, weights, &gp, x_k, g, options, budget);
}

double baseline_cost(const OcpSolution& baseline) { return baseline.J_hat; }

// --- ledger -----------------------------------------------------------------

double LearningLedger::j_plus(const CostWeights& weights, double J_B) const {
  if (!has_previous) return 0.0;
  return trajectory_cost(weights, prev_x_hat, prev_u_hat) - J_B;
}

Budget LearningLedger::budget(double J_B, double jp) const {
  const double pos = std::max(jp, 0.0);
  Budget b;
  b.J_B = J_B;
  b.bound_mean = params.beta_bar * pos + params.gamma_bar + Y;
  b.bound_max = params.beta_max * pos + params.gamma_max;
  return b;
}

LearningLedger update_ledger(const LearningLedger& ledger, double j_plus, double delta) {
  LearningLedger out = ledger;
  out.Y = ledger.Y + ledger.params.beta_bar * std::max(j_plus, 0.0) + ledger.params.gamma_bar - delta;
  return out;
}

void record_plan(LearningLedger& ledger, const OcpSolution& solution) {
  ledger.has_previous = true;
  ledger.prev_x_hat = solution.x_hat;
  ledger.prev_u_hat = solution.u_hat;
}

}  // namespace dualmpc::ocp
