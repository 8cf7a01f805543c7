#include "dualmpc/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dualmpc/error.hpp"
#include "dualmpc/ocp.hpp"
#include "dualmpc/qp.hpp"
#include "dualmpc/setops.hpp"
#include "dualmpc/sqp.hpp"

namespace dualmpc::checks {

using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

CheckResult result(std::string name, bool passed, const std::ostringstream& detail) {
  return {std::move(name), passed, detail.str()};
}

// Inputs drawn on the state range with a minimum spacing so the explicit
// inverse stays well conditioned.
gp::GpDataset random_dataset(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> z(-0.1, 1.1);
  std::uniform_real_distribution<double> y(-0.05, 0.05);
  gp::GpDataset d;
  while (static_cast<int>(d.size()) < n) {
    const double zi = z(rng);
    const bool spaced =
        std::all_of(d.inputs.begin(), d.inputs.end(), [&](double zj) { return std::abs(zi - zj) > 0.02; });
    if (spaced) d.add(static_cast<int>(d.size()), zi, y(rng));
  }
  return d;
}

gp::GpPrediction explicit_posterior(const gp::GpDataset& d, const gp::GpHyper& h, double z) {
  const auto n = static_cast<Eigen::Index>(d.size());
  MatrixXd K(n, n);
  VectorXd k(n);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k[i] = gp::kernel(h, z, d.inputs[static_cast<std::size_t>(i)]);
    y[i] = d.targets[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j)
      K(i, j) = gp::kernel(h, d.inputs[static_cast<std::size_t>(i)], d.inputs[static_cast<std::size_t>(j)]);
  }
  const MatrixXd Kinv = (K + (h.sigma_v2 + h.jitter) * MatrixXd::Identity(n, n)).inverse();
  gp::GpPrediction p;
  p.mean = k.dot(Kinv * y);
  p.variance = std::max(gp::kernel(h, z, z) - k.dot(Kinv * k), 0.0);
  return p;
}

VectorXd jittered_weights(const gp::GpDataset& d, const gp::GpHyper& h) {
  const auto n = static_cast<Eigen::Index>(d.size());
  MatrixXd K(n, n);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = d.targets[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j)
      K(i, j) = gp::kernel(h, d.inputs[static_cast<std::size_t>(i)], d.inputs[static_cast<std::size_t>(j)]);
  }
  return (K + (h.sigma_v2 + h.jitter) * MatrixXd::Identity(n, n)).inverse() * y;
}

// Five samples of the true residual along the first part of a step response.
gp::GpModel five_point_gp(const sim::ScenarioConfig& config) {
  gp::GpDataset d;
  const double z[] = {0.0, 0.15, 0.35, 0.6, 0.8};
  for (int i = 0; i < 5; ++i) d.add(i, z[i], model::true_residual(config.plant, Vector2d(z[i], 0.0)));
  return gp::GpModel::fit(d, config.gp.hyper);
}

// Vertices of a bounded 2-D polytope, counter-clockwise.
std::vector<Vector2d> vertices(const setops::Polytope& p) {
  std::vector<Vector2d> out;
  for (int i = 0; i < p.num_faces(); ++i) {
    for (int j = i + 1; j < p.num_faces(); ++j) {
      Matrix2d m;
      m.row(0) = p.normals.row(i);
      m.row(1) = p.normals.row(j);
      if (std::abs(m.determinant()) < 1e-12) continue;
      const Vector2d v = m.inverse() * Vector2d(p.offsets[i], p.offsets[j]);
      if (!p.contains(v, 1e-9)) continue;
      const bool dup = std::any_of(out.begin(), out.end(), [&](const Vector2d& w) { return (w - v).norm() < 1e-10; });
      if (!dup) out.push_back(v);
    }
  }
  if (out.empty()) return out;
  Vector2d c = Vector2d::Zero();
  for (const Vector2d& v : out) c += v;
  c /= static_cast<double>(out.size());
  std::sort(out.begin(), out.end(), [&](const Vector2d& a, const Vector2d& b) {
    return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
  });
  return out;
}

ocp::OcpData benchmark_data(const sim::ScenarioConfig& config) {
  return ocp::make_ocp_data(model::make_nominal_model(config.plant), config.mpc);
}

}  // namespace

CheckResult gp_oracle(const gp::GpHyper& hyper, int datasets, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> q(-0.3, 1.3);
  gp::GpHyper noise_free = hyper;
  noise_free.sigma_v2 = 0.0;
  double oracle_err = 0.0;
  double interp_err = 0.0;
  double interp_var = 0.0;
  double cap_excess = 0.0;
  for (int s = 0; s < datasets; ++s) {
    const gp::GpDataset d = random_dataset(rng, 1 + s % 5);
    const gp::GpModel m = gp::GpModel::fit(d, hyper);
    for (int i = 0; i < 20; ++i) {
      const double z = q(rng);
      const gp::GpPrediction a = m.predict(z);
      const gp::GpPrediction b = explicit_posterior(d, hyper, z);
      oracle_err = std::max({oracle_err, std::abs(a.mean - b.mean), std::abs(a.variance - b.variance)});
      cap_excess = std::max({cap_excess, a.variance - hyper.sigma_f2, -a.variance});
    }
    // With jitter e the residual at a training input is exactly e * alpha_i,
    // alpha = (K + e I)^-1 y, and the variance there is at most e.
    const gp::GpModel nf = gp::GpModel::fit(d, noise_free);
    const VectorXd alpha = jittered_weights(d, noise_free);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const gp::GpPrediction p = nf.predict(d.inputs[i]);
      const double allowed = noise_free.jitter * std::abs(alpha[static_cast<Eigen::Index>(i)]) * (1.0 + 1e-6) + 1e-12;
      interp_err = std::max(interp_err, std::abs(p.mean - d.targets[i]) - allowed);
      interp_var = std::max(interp_var, p.variance - noise_free.jitter);
    }
  }
  std::ostringstream os;
  os << datasets << " datasets: oracle error " << oracle_err << ", interpolation excess over jitter bound "
     << std::max(interp_err, 0.0) << " (variance excess " << std::max(interp_var, 0.0) << "), variance cap excess "
     << std::max(cap_excess, 0.0);
  return result("gp_oracle", oracle_err <= 1e-10 && interp_err <= 0.0 && interp_var <= 1e-15 && cap_excess <= 0.0,
                os);
}

CheckResult sparse_collapse(const gp::GpHyper& hyper, int queries, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  gp::GpDataset d;
  for (int i = 0; i < 6; ++i) {
    const double z = -0.1 + 0.2 * i + 0.05 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    d.add(i, z, 0.033 * (1.0 - std::exp(-z)) * z);
  }
  const gp::GpModel exact = gp::GpModel::fit(d, hyper, gp::GpMode::Exact);
  const gp::GpModel sparse = gp::GpModel::fit(d, hyper, gp::GpMode::Sparse, d.inputs);
  std::uniform_real_distribution<double> q(-0.5, 1.5);
  double err = 0.0;
  for (int i = 0; i < queries; ++i) {
    const double z = q(rng);
    const gp::GpPrediction a = exact.predict(z);
    const gp::GpPrediction b = sparse.predict(z);
    err = std::max({err, std::abs(a.mean - b.mean), std::abs(a.variance - b.variance)});
  }
  std::ostringstream os;
  os << queries << " queries: max deviation " << err;
  return result("sparse_collapse", err <= 1e-6, os);
}

CheckResult ocp_derivatives(const sim::ScenarioConfig& config, int points, std::uint64_t seed) {
  const ocp::OcpData data = benchmark_data(config);
  const gp::GpModel g = five_point_gp(config);
  const ocp::CostWeights w = ocp::make_weights(data, config.setpoint(0.0), config.lambda);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> x1(0.0, 1.0);
  std::uniform_real_distribution<double> x2(-0.2, 0.2);
  std::ostringstream os;
  bool ok = true;
  int total = 0;
  for (ocp::Formulation f : {ocp::Formulation::Rmpc, ocp::Formulation::Passive, ocp::Formulation::Active,
                             ocp::Formulation::SingleBaseline, ocp::Formulation::SingleActive}) {
    int found = 0;
    int flagged = 0;
    for (int attempt = 0; found < points && attempt < 10 * points; ++attempt) {
      const Vector2d x0(x1(rng), x2(rng));
      const ocp::Guess guess = ocp::hover_guess(data, x0);
      ocp::OcpSolution sol;
      ocp::Budget budget;
      try {
        switch (f) {
          case ocp::Formulation::Rmpc: sol = ocp::solve_rmpc(data, w, x0, guess, config.solver); break;
          case ocp::Formulation::Passive: sol = ocp::solve_passive(data, w, g, x0, guess, config.solver); break;
          case ocp::Formulation::SingleBaseline:
            sol = ocp::solve_single_baseline(data, w, g, x0, guess, config.solver);
            break;
          case ocp::Formulation::Active: {
            const ocp::OcpSolution base = ocp::solve_passive(data, w, g, x0, guess, config.solver);
            budget = {ocp::baseline_cost(base), 1.0, std::numeric_limits<double>::infinity()};
            sol = ocp::solve_active(data, w, g, x0, base, budget, config.solver);
            break;
          }
          case ocp::Formulation::SingleActive: {
            const ocp::OcpSolution base = ocp::solve_single_baseline(data, w, g, x0, guess, config.solver);
            budget = {ocp::baseline_cost(base), 1.0, std::numeric_limits<double>::infinity()};
            sol = ocp::solve_single_active(data, w, g, x0, base, budget, config.solver);
            break;
          }
        }
      } catch (const Error&) {
        continue;
      }
      if (!sol.feasible) continue;
      ++found;
      const ocp::OcpProblem problem(data, f, w, &g, x0, budget);
      if (!nlp::check_derivatives(problem, sol.variables, 1e-5).empty()) ++flagged;
    }
    total += found;
    os << ocp::to_string(f) << " " << flagged << "/" << found << " flagged; ";
    ok = ok && found == points && flagged == 0;
  }
  os << total << " points";
  return result("ocp_derivatives", ok, os);
}

CheckResult dual_effect(const sim::ScenarioConfig& config, double* sensitivity) {
  const ocp::OcpData data = benchmark_data(config);
  const gp::GpModel g = five_point_gp(config);
  const ocp::CostWeights w = ocp::make_weights(data, config.setpoint(0.0), config.lambda);
  const ocp::OcpProblem problem(data, ocp::Formulation::Passive, w, &g, Vector2d(0.3, 0.2));
  const VectorXd u = VectorXd::Constant(data.horizon(), -0.5);
  auto var_sum = [&](const VectorXd& uu) {
    double s = 0.0;
    for (const auto& q : problem.performance_rollout(uu, false).gp) s += q.variance;
    return s;
  };
  const double delta = 1e-4;
  VectorXd up = u;
  VectorXd um = u;
  up[0] += delta;
  um[0] -= delta;
  const double sens = std::abs(var_sum(up) - var_sum(um)) / (2.0 * delta);
  if (sensitivity) *sensitivity = sens;
  std::ostringstream os;
  os << "d(sum variance)/du_0 = " << sens;
  return result("dual_effect", sens > 1e-6, os);
}

CheckResult rci_sampling(const sim::ScenarioConfig& config, int samples) {
  const ocp::OcpData data = benchmark_data(config);
  const int N = data.horizon();
  const setops::Polytope& omega = data.terminal;
  const std::vector<Vector2d> vs = vertices(omega);
  std::ostringstream os;
  if (vs.size() < 3) {
    os << "terminal set has " << vs.size() << " vertices";
    return result("rci_sampling", false, os);
  }
  const MatrixXd Ak = data.model.A + data.model.Bu * data.K;
  const setops::Zonotope& d = data.sets.terminal_disturbance;
  std::vector<VectorXd> dverts;
  for (int mask = 0; mask < (1 << d.order()); ++mask) {
    VectorXd xi(d.order());
    for (int k = 0; k < d.order(); ++k) xi[k] = (mask >> k) & 1 ? 1.0 : -1.0;
    dverts.push_back(d.center + d.generators * xi);
  }
  const setops::BoxSet& XN = data.sets.state[static_cast<std::size_t>(N)];
  const setops::BoxSet& UN = data.sets.input[static_cast<std::size_t>(N - 1)];
  int violations = 0;
  for (int s = 0; s < samples; ++s) {
    const double pos = static_cast<double>(s) / samples * static_cast<double>(vs.size());
    const auto e = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(e);
    const Vector2d x = (1.0 - frac) * vs[e] + frac * vs[(e + 1) % vs.size()];
    if (!XN.contains(x, 1e-9)) ++violations;
    if (!UN.contains(data.K * x, 1e-9)) ++violations;
    for (const VectorXd& wv : dverts)
      if (!omega.contains(Ak * x + wv, 1e-9)) ++violations;
  }
  os << samples << " boundary samples, " << dverts.size() << " disturbance vertices, " << violations
     << " violations";
  return result("rci_sampling", violations == 0, os);
}

CheckResult dare(const sim::ScenarioConfig& config) {
  const model::DiscreteModel m = model::make_nominal_model(config.plant);
  const MatrixXd A = m.A;
  const MatrixXd B = m.Bu;
  const MatrixXd Q = config.mpc.Q;
  const MatrixXd R = MatrixXd::Constant(1, 1, config.mpc.R);
  const setops::LqrSolution lqr = setops::solve_dare(A, B, Q, R);
  const double res = setops::dare_residual(A, B, Q, R, lqr.P);
  const double asym = (lqr.P - lqr.P.transpose()).cwiseAbs().maxCoeff();
  const double min_eig = Eigen::SelfAdjointEigenSolver<MatrixXd>(lqr.P).eigenvalues().minCoeff();
  const double rho = setops::spectral_radius(A + B * lqr.K);
  std::ostringstream os;
  os << "residual " << res << ", asymmetry " << asym << ", min eig(P) " << min_eig << ", rho(A+BK) " << rho;
  return result("dare", res < 1e-8 && asym == 0.0 && min_eig > 0.0 && rho < 1.0, os);
}

CheckResult solver_smoke(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  double qp_kkt = 0.0;
  int qp_fail = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = 6;
    const int m = 4;
    MatrixXd L(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) L(i, j) = n01(rng);
    nlp::QpProblem qp;
    qp.H = L * L.transpose() + MatrixXd::Identity(n, n);
    qp.g = VectorXd::NullaryExpr(n, [&] { return n01(rng); });
    // Constraints built around a point inside the box, so every problem is feasible.
    const VectorXd xf = VectorXd::NullaryExpr(n, [&] { return 0.5 * n01(rng); }).cwiseMax(-1.5).cwiseMin(1.5);
    qp.A_eq = MatrixXd::NullaryExpr(1, n, [&] { return n01(rng); });
    qp.b_eq = qp.A_eq * xf;
    qp.A_in = MatrixXd::NullaryExpr(m, n, [&] { return n01(rng); });
    qp.b_in = qp.A_in * xf - VectorXd::NullaryExpr(m, [&] { return std::abs(n01(rng)); });
    qp.lower = VectorXd::Constant(n, -2.0);
    qp.upper = VectorXd::Constant(n, 2.0);
    const nlp::QpSolution s = nlp::solve_qp(qp);
    if (s.status != nlp::QpStatus::Optimal || s.elastic) ++qp_fail;
    else qp_kkt = std::max(qp_kkt, nlp::qp_kkt_residual(qp, s));
  }

  // min |x|^2 s.t. x0 + x1 = 1: solution (0.5, 0.5).
  nlp::FunctionNlp eq(2, [](const VectorXd& x, VectorXd* g) {
    if (g) *g = 2.0 * x;
    return x.squaredNorm();
  });
  eq.equalities(1, [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
    c[0] = x[0] + x[1] - 1.0;
    if (j) *j << 1.0, 1.0;
  });
  const nlp::SqpResult r1 = nlp::solve_sqp(eq, Vector2d(3.0, -4.0));
  const double eq_err = (r1.x - Vector2d(0.5, 0.5)).cwiseAbs().maxCoeff();

  // Rosenbrock on the disk |x|^2 <= 1.5: constrained optimum on the circle.
  nlp::FunctionNlp disk(2, [](const VectorXd& v, VectorXd* g) {
    const double x = v[0];
    const double y = v[1];
    if (g) {
      (*g)[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
      (*g)[1] = 200.0 * (y - x * x);
    }
    return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
  });
  disk.inequalities(1, [](const VectorXd& v, VectorXd& c, MatrixXd* jac) {
    c[0] = 1.5 - v.squaredNorm();
    if (jac) jac->row(0) = -2.0 * v.transpose();
  });
  nlp::SqpOptions bfgs;
  bfgs.hessian = nlp::HessianMode::Bfgs;
  const nlp::SqpResult r2 = nlp::solve_sqp(disk, Vector2d(0.0, 0.0), bfgs);
  const bool disk_ok = r2.status == nlp::SqpStatus::Optimal && r2.violation <= 1e-8 &&
                       std::abs(r2.x.squaredNorm() - 1.5) < 1e-6;
  const bool fd_ok = nlp::check_derivatives(disk, Vector2d(0.3, -0.7)).empty();

  std::ostringstream os;
  os << "qp: " << qp_fail << " failures, max kkt " << qp_kkt << "; equality sqp error " << eq_err
     << "; disk sqp " << nlp::to_string(r2.status) << " (" << r2.iterations << " it); derivative check "
     << (fd_ok ? "clean" : "flagged");
  return result("solver_smoke",
                qp_fail == 0 && qp_kkt <= 1e-8 && r1.status == nlp::SqpStatus::Optimal && eq_err <= 1e-6 &&
                    disk_ok && fd_ok,
                os);
}

std::vector<CheckResult> gp_suite(const sim::ScenarioConfig& config) {
  return {gp_oracle(config.gp.hyper), sparse_collapse(config.gp.hyper)};
}

std::vector<CheckResult> solver_suite(const sim::ScenarioConfig& config) {
  return {solver_smoke(), dare(config), rci_sampling(config), ocp_derivatives(config), dual_effect(config)};
}

}  // namespace dualmpc::checks
