#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dualmpc/qp.hpp"
#include "dualmpc/setops.hpp"
#include "dualmpc/sqp.hpp"

using namespace dualmpc::nlp;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

QpProblem unconstrained(const MatrixXd& H, const VectorXd& g) {
  QpProblem qp;
  qp.H = H;
  qp.g = g;
  qp.A_eq = MatrixXd(0, g.size());
  qp.A_in = MatrixXd(0, g.size());
  return qp;
}

double rosenbrock(const VectorXd& v, VectorXd* grad) {
  const double x = v[0];
  const double y = v[1];
  if (grad) {
    (*grad)[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
    (*grad)[1] = 200.0 * (y - x * x);
  }
  return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
}

FunctionNlp rosenbrock_disk() {
  FunctionNlp nlp(2, rosenbrock);
  nlp.inequalities(1, [](const VectorXd& v, VectorXd& c, MatrixXd* jac) {
    c[0] = 1.5 - v.squaredNorm();
    if (jac) jac->row(0) = -2.0 * v.transpose();
  });
  return nlp;
}

}  // namespace

TEST(Qp, Unconstrained) {
  const QpSolution s = solve_qp(unconstrained(MatrixXd::Identity(2, 2), -Vector2d(1.0, 1.0)));
  ASSERT_EQ(s.status, QpStatus::Optimal);
  EXPECT_NEAR((s.x - Vector2d(1.0, 1.0)).norm(), 0.0, 1e-12);
  EXPECT_FALSE(s.elastic);
}

TEST(Qp, SingleInequality) {
  QpProblem qp = unconstrained(MatrixXd::Identity(2, 2), Vector2d::Zero());
  qp.A_in = MatrixXd(1, 2);
  qp.A_in << 1.0, 0.0;
  qp.b_in = VectorXd::Constant(1, 1.0);
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::Optimal);
  EXPECT_NEAR(s.x[0], 1.0, 1e-12);
  EXPECT_NEAR(s.x[1], 0.0, 1e-12);
  EXPECT_NEAR(s.y_in[0], 1.0, 1e-12);
  EXPECT_LE(qp_kkt_residual(qp, s), 1e-9);
}

TEST(Qp, SingleEquality) {
  QpProblem qp = unconstrained(MatrixXd::Identity(2, 2), Vector2d::Zero());
  qp.A_eq = MatrixXd(1, 2);
  qp.A_eq << 1.0, 1.0;
  qp.b_eq = VectorXd::Constant(1, 2.0);
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::Optimal);
  EXPECT_NEAR((s.x - Vector2d(1.0, 1.0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(s.y_eq[0], 1.0, 1e-12);
}

TEST(Qp, BoundsAndMultiplierSigns) {
  QpProblem qp = unconstrained(MatrixXd::Identity(2, 2), Vector2d(-3.0, 3.0));
  qp.lower = Vector2d(-1.0, -1.0);
  qp.upper = Vector2d(1.0, 1.0);
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::Optimal);
  EXPECT_NEAR(s.x[0], 1.0, 1e-12);
  EXPECT_NEAR(s.x[1], -1.0, 1e-12);
  EXPECT_LT(s.y_bound[0], 0.0);
  EXPECT_GT(s.y_bound[1], 0.0);
  EXPECT_LE(qp_kkt_residual(qp, s), 1e-9);
}

TEST(Qp, RandomProblemsSatisfyKkt) {
  std::mt19937 rng(42);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 6;
    MatrixXd M(n, n);
    for (int k = 0; k < M.size(); ++k) M.data()[k] = nd(rng);
    QpProblem qp = unconstrained(M * M.transpose() + 0.1 * MatrixXd::Identity(n, n), VectorXd::NullaryExpr(n, [&] { return nd(rng); }));
    qp.A_eq = MatrixXd::NullaryExpr(2, n, [&] { return nd(rng); });
    qp.b_eq = VectorXd::NullaryExpr(2, [&] { return nd(rng); });
    qp.A_in = MatrixXd::NullaryExpr(5, n, [&] { return nd(rng); });
    qp.b_in = VectorXd::NullaryExpr(5, [&] { return nd(rng) - 2.0; });
    qp.lower = VectorXd::Constant(n, -3.0);
    qp.upper = VectorXd::Constant(n, 3.0);
    const QpSolution s = solve_qp(qp);
    if (s.status == QpStatus::Optimal) {
      EXPECT_LE(qp_kkt_residual(qp, s), 1e-9) << "trial " << trial;
    } else {
      EXPECT_EQ(s.status, QpStatus::Infeasible);
      EXPECT_TRUE(s.elastic);
      // Independent check: the feasible polytope is empty.
      dualmpc::setops::Polytope p;
      p.normals = MatrixXd(4 + 5 + 2 * n, n);
      p.offsets = VectorXd(4 + 5 + 2 * n);
      p.normals << qp.A_eq, -qp.A_eq, -qp.A_in, MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
      p.offsets << qp.b_eq, -qp.b_eq, -qp.b_in, qp.upper, -qp.lower;
      EXPECT_TRUE(dualmpc::setops::is_empty(p)) << "trial " << trial;
    }
  }
}

TEST(Qp, PermutationInvariance) {
  std::mt19937 rng(9);
  std::normal_distribution<double> nd;
  const int n = 5;
  MatrixXd M = MatrixXd::NullaryExpr(n, n, [&] { return nd(rng); });
  QpProblem qp = unconstrained(M * M.transpose() + MatrixXd::Identity(n, n), VectorXd::NullaryExpr(n, [&] { return nd(rng); }));
  qp.A_in = MatrixXd::NullaryExpr(4, n, [&] { return nd(rng); });
  qp.b_in = VectorXd::NullaryExpr(4, [&] { return nd(rng) - 3.0; });
  qp.lower = VectorXd::Constant(n, -1.0);
  qp.upper = VectorXd::Constant(n, 0.5);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
  perm.indices() << 3, 0, 4, 1, 2;
  QpProblem pq = qp;
  pq.H = perm.transpose() * qp.H * perm;
  pq.g = perm.transpose() * qp.g;
  pq.A_in = qp.A_in * perm;
  pq.lower = perm.transpose() * qp.lower;
  pq.upper = perm.transpose() * qp.upper;
  const QpSolution a = solve_qp(qp);
  const QpSolution b = solve_qp(pq);
  ASSERT_EQ(a.status, QpStatus::Optimal);
  ASSERT_EQ(b.status, QpStatus::Optimal);
  EXPECT_NEAR((a.x - perm * b.x).norm(), 0.0, 1e-10);
}

TEST(Qp, InfeasibleUsesElasticMode) {
  QpProblem qp = unconstrained(MatrixXd::Identity(1, 1), VectorXd::Zero(1));
  qp.A_in = MatrixXd(2, 1);
  qp.A_in << 1.0, -1.0;
  qp.b_in = Vector2d(1.0, 1.0);  // x >= 1 and x <= -1
  const QpSolution s = solve_qp(qp);
  EXPECT_EQ(s.status, QpStatus::Infeasible);
  EXPECT_TRUE(s.elastic);
  EXPECT_NEAR(s.elastic_violation, 2.0, 1e-6);
}

TEST(Qp, IndefiniteHessianIsShifted) {
  QpProblem qp = unconstrained(MatrixXd::Zero(1, 1), VectorXd::Constant(1, 1.0));
  qp.lower = VectorXd::Constant(1, -2.0);
  qp.upper = VectorXd::Constant(1, 2.0);
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::Optimal);
  EXPECT_NEAR(s.x[0], -2.0, 1e-9);
}

TEST(Qp, UnboundedIsNumericalFailure) {
  const QpSolution s = solve_qp(unconstrained(MatrixXd::Zero(1, 1), VectorXd::Constant(1, 1.0)));
  EXPECT_EQ(s.status, QpStatus::NumericalFailure);
}

TEST(Sqp, UnconstrainedQuadratic) {
  FunctionNlp nlp(1, [](const VectorXd& x, VectorXd* g) {
    if (g) (*g)[0] = 2.0 * (x[0] - 3.0);
    return (x[0] - 3.0) * (x[0] - 3.0);
  });
  const SqpResult r = solve_sqp(nlp, VectorXd::Zero(1));
  ASSERT_EQ(r.status, SqpStatus::Optimal);
  EXPECT_NEAR(r.x[0], 3.0, 1e-6);
  EXPECT_LE(r.iterations, 30);
}

TEST(Sqp, EqualityConstrainedQuadratic) {
  FunctionNlp nlp(2, [](const VectorXd& x, VectorXd* g) {
    if (g) *g = 2.0 * x;
    return x.squaredNorm();
  });
  nlp.equalities(1, [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
    c[0] = x[0] + x[1] - 1.0;
    if (j) *j << 1.0, 1.0;
  });
  const SqpResult r = solve_sqp(nlp, Vector2d(3.0, -4.0));
  ASSERT_EQ(r.status, SqpStatus::Optimal);
  EXPECT_NEAR(r.x[0], 0.5, 1e-6);
  EXPECT_NEAR(r.x[1], 0.5, 1e-6);
}

TEST(Sqp, RosenbrockOnDiskMatchesGridOracle) {
  // Oracle: the unconstrained minimizer (1,1) lies outside the disk and is the
  // only stationary point, so the optimum is on the circle. Dense angle grid
  // plus golden-section polish.
  const double rad = std::sqrt(1.5);
  auto on_circle = [&](double th) {
    VectorXd v(2);
    v << rad * std::cos(th), rad * std::sin(th);
    return rosenbrock(v, nullptr);
  };
  const int grid = 200000;
  double best_th = 0.0;
  double best = kInf;
  for (int i = 0; i < grid; ++i) {
    const double th = 2.0 * M_PI * i / grid;
    const double f = on_circle(th);
    if (f < best) {
      best = f;
      best_th = th;
    }
  }
  double a = best_th - 2.0 * M_PI / grid;
  double b = best_th + 2.0 * M_PI / grid;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 200; ++i) {
    const double c = b - gr * (b - a);
    const double d = a + gr * (b - a);
    if (on_circle(c) < on_circle(d)) {
      b = d;
    } else {
      a = c;
    }
  }
  const double oracle = on_circle(0.5 * (a + b));

  for (HessianMode mode : {HessianMode::Bfgs}) {
    SqpOptions opt;
    opt.hessian = mode;
    const SqpResult r = solve_sqp(rosenbrock_disk(), Vector2d(0.0, 0.0), opt);
    ASSERT_EQ(r.status, SqpStatus::Optimal) << to_string(r.status);
    EXPECT_LE(r.kkt, 1e-6);
    EXPECT_LE(r.violation, 1e-8);
    EXPECT_NEAR(r.objective, oracle, 1e-4);
  }
}

TEST(Sqp, MeritNeverIncreasesAndRunIsDeterministic) {
  SqpOptions opt;
  opt.hessian = HessianMode::Bfgs;
  const SqpResult a = solve_sqp(rosenbrock_disk(), Vector2d(-1.0, 1.0), opt);
  const SqpResult b = solve_sqp(rosenbrock_disk(), Vector2d(-1.0, 1.0), opt);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    const SqpIterate& h = a.history[i];
    if (h.step > 0.0) EXPECT_LE(h.merit_next, h.merit) << "iteration " << i;
    EXPECT_EQ(h.objective, b.history[i].objective);
    EXPECT_EQ(h.violation, b.history[i].violation);
    EXPECT_EQ(h.step, b.history[i].step);
  }
  EXPECT_EQ(a.x, b.x);
}

TEST(Sqp, NanIsNumericalFailure) {
  FunctionNlp nlp(1, [](const VectorXd&, VectorXd* g) {
    if (g) (*g)[0] = std::nan("");
    return std::nan("");
  });
  EXPECT_EQ(solve_sqp(nlp, VectorXd::Zero(1)).status, SqpStatus::NumericalFailure);
}

TEST(Sqp, InconsistentConstraintsReportInfeasible) {
  FunctionNlp nlp(1, [](const VectorXd& x, VectorXd* g) {
    if (g) (*g)[0] = 2.0 * x[0];
    return x[0] * x[0];
  });
  nlp.inequalities(2, [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
    c << x[0] - 1.0, -1.0 - x[0];
    if (j) *j << 1.0, -1.0;
  });
  EXPECT_EQ(solve_sqp(nlp, VectorXd::Zero(1)).status, SqpStatus::Infeasible);
}

TEST(Sqp, StructuredHessianCallback) {
  FunctionNlp nlp = rosenbrock_disk();
  // Gauss-Newton of the residuals (1-x, 10(y-x^2)) plus constraint curvature.
  nlp.hessian_callback([](const VectorXd& v, const VectorXd&, const VectorXd& y_in) {
    MatrixXd J(2, 2);
    J << -1.0, 0.0, -20.0 * v[0], 10.0;
    MatrixXd H = 2.0 * J.transpose() * J;
    H += 2.0 * std::max(y_in[0], 0.0) * MatrixXd::Identity(2, 2);
    return H;
  });
  const SqpResult r = solve_sqp(nlp, Vector2d(0.0, 0.0));
  ASSERT_EQ(r.status, SqpStatus::Optimal);
  EXPECT_LE(r.violation, 1e-8);
}

TEST(DerivativeCheck, ExactCallbacksAreClean) {
  EXPECT_TRUE(check_derivatives(rosenbrock_disk(), Vector2d(0.3, -0.7)).empty());
}

TEST(DerivativeCheck, CorruptedEntryIsFlagged) {
  FunctionNlp nlp(2, [](const VectorXd& v, VectorXd* g) {
    const double f = rosenbrock(v, g);
    if (g) (*g)[1] += 0.5;
    return f;
  });
  const auto flags = check_derivatives(nlp, Vector2d(0.3, -0.7));
  ASSERT_EQ(flags.size(), 1u);
  EXPECT_EQ(flags[0].block, "objective");
  EXPECT_EQ(flags[0].col, 1);
}
