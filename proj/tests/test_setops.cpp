#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dualmpc/error.hpp"
#include "dualmpc/setops.hpp"

using namespace dualmpc;
using namespace dualmpc::setops;
using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

MatrixXd bench_A() {
  MatrixXd a(2, 2);
  a << 1.0, 0.1, -0.033, 0.9;
  return a;
}

MatrixXd bench_B() {
  MatrixXd b(2, 1);
  b << 0.0, -0.1;
  return b;
}

MatrixXd bench_Q() { return Vector2d(20.0, 1.0).asDiagonal(); }

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

BoxSet box2(double a, double b, double c, double d) {
  return BoxSet(Vector2d(a, c), Vector2d(b, d));
}

// Vertices of a bounded 2-D polytope, counter-clockwise.
std::vector<Vector2d> vertices(const Polytope& p) {
  std::vector<Vector2d> out;
  for (int i = 0; i < p.num_faces(); ++i) {
    for (int j = i + 1; j < p.num_faces(); ++j) {
      Matrix2d m;
      m.row(0) = p.normals.row(i);
      m.row(1) = p.normals.row(j);
      if (std::abs(m.determinant()) < 1e-12) continue;
      const Vector2d v = m.inverse() * Vector2d(p.offsets[i], p.offsets[j]);
      if (!p.contains(v, 1e-9)) continue;
      bool dup = false;
      for (const auto& w : out) dup = dup || (w - v).norm() < 1e-10;
      if (!dup) out.push_back(v);
    }
  }
  Vector2d c = Vector2d::Zero();
  for (const auto& v : out) c += v;
  c /= static_cast<double>(out.size());
  std::sort(out.begin(), out.end(), [&](const Vector2d& a, const Vector2d& b) {
    return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
  });
  return out;
}

}  // namespace

TEST(Dare, ZeroDynamicsGivesStageCost) {
  const LqrSolution s = solve_dare(scalar(0.0), scalar(1.0), scalar(2.5), scalar(1.0));
  EXPECT_NEAR(s.P(0, 0), 2.5, 1e-12);
  EXPECT_NEAR(s.K(0, 0), 0.0, 1e-12);
}

TEST(Dare, ScalarGoldenRatio) {
  const LqrSolution s = solve_dare(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0));
  EXPECT_NEAR(s.P(0, 0), (1.0 + std::sqrt(5.0)) / 2.0, 1e-10);
}

TEST(Dare, BenchmarkResidualAndStability) {
  const MatrixXd A = bench_A();
  const MatrixXd B = bench_B();
  const LqrSolution s = solve_dare(A, B, bench_Q(), scalar(1.0));
  EXPECT_LT(dare_residual(A, B, bench_Q(), scalar(1.0), s.P), 1e-8);
  EXPECT_LT(spectral_radius(A + B * s.K), 1.0);
  EXPECT_NEAR((s.P - s.P.transpose()).norm(), 0.0, 1e-12);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s.P);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  // Gain is the minimizer of the one-step Bellman problem.
  const MatrixXd K = -(scalar(1.0) + B.transpose() * s.P * B).inverse() * B.transpose() * s.P * A;
  EXPECT_NEAR((K - s.K).norm(), 0.0, 1e-10);
}

TEST(Dare, IndefiniteRRejected) {
  EXPECT_THROW(solve_dare(scalar(1.0), scalar(1.0), scalar(1.0), scalar(-1.0)), Error);
}

TEST(Zonotope, SupportExamples) {
  MatrixXd g(2, 1);
  g << 0.0, 0.33;
  const Zonotope z(Vector2d::Zero(), g);
  EXPECT_DOUBLE_EQ(zonotope_support(z, Vector2d(0.0, 1.0)), 0.33);
  EXPECT_DOUBLE_EQ(zonotope_support(z, Vector2d(1.0, 0.0)), 0.0);

  MatrixXd g2(2, 2);
  g2 << 0.1, 0.05, 0.0, 0.2;
  const Zonotope z2(Vector2d::Zero(), g2);
  EXPECT_NEAR(zonotope_support(z2, Vector2d(1.0, 0.0)), 0.15, 1e-15);
}

TEST(Zonotope, DimensionMismatchThrows) {
  const Zonotope z = Zonotope::point(Vector2d::Zero());
  EXPECT_THROW(zonotope_support(z, VectorXd::Zero(3)), Error);
}

TEST(Zonotope, ZeroGeneratorsDropped) {
  const Zonotope z = Zonotope::from_box(box2(0.0, 0.0, -0.33, 0.33));
  EXPECT_EQ(z.order(), 1);
}

TEST(Tightening, StageZeroIsUntouched) {
  const BoxSet X = box2(-0.1, 1.1, -5.0, 5.0);
  const BoxSet U(VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0));
  const BoxSet W = box2(0.0, 0.0, -0.33, 0.33);
  const TighteningSequence t = tighten_sequences(bench_A(), bench_B(), MatrixXd::Zero(1, 2), X, U, W, 1);
  EXPECT_EQ(t.state[0].lower, X.lower);
  EXPECT_EQ(t.state[0].upper, X.upper);
  EXPECT_EQ(t.input[0].lower, U.lower);
  EXPECT_EQ(t.input[0].upper, U.upper);
}

TEST(Tightening, OneStepWithZeroGain) {
  const BoxSet X = box2(-0.1, 1.1, -5.0, 5.0);
  const BoxSet U(VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0));
  const BoxSet W = box2(0.0, 0.0, -0.33, 0.33);
  const TighteningSequence t = tighten_sequences(bench_A(), bench_B(), MatrixXd::Zero(1, 2), X, U, W, 1);
  EXPECT_NEAR(t.state[1].lower[0], -0.1, 1e-15);
  EXPECT_NEAR(t.state[1].upper[0], 1.1, 1e-15);
  EXPECT_NEAR(t.state[1].lower[1], -4.67, 1e-12);
  EXPECT_NEAR(t.state[1].upper[1], 4.67, 1e-12);
}

TEST(Tightening, TwoStepsMatchExplicitMinkowskiEnumeration) {
  const MatrixXd A = bench_A();
  const MatrixXd B = bench_B();
  const LqrSolution lqr = solve_dare(A, B, bench_Q(), scalar(1.0));
  const BoxSet X = box2(-0.1, 1.1, -5.0, 5.0);
  const BoxSet U(VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0));
  const BoxSet W = box2(0.0, 0.0, -0.33, 0.33);
  const TighteningSequence t = tighten_sequences(A, B, lqr.K, X, U, W, 2);

  // R_2 = W + (A+BK) W; enumerate vertex sums.
  const MatrixXd Ak = A + B * lqr.K;
  double max_x1 = -1e300;
  for (double w0 : {-0.33, 0.33}) {
    for (double w1 : {-0.33, 0.33}) {
      const Vector2d s = Vector2d(0.0, w0) + Ak * Vector2d(0.0, w1);
      max_x1 = std::max(max_x1, s[0]);
    }
  }
  EXPECT_NEAR(t.state[2].upper[0], 1.1 - max_x1, 1e-14);
}

TEST(Tightening, MonotoneAndPontryaginSound) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const MatrixXd A = bench_A();
  const MatrixXd B = bench_B();
  const LqrSolution lqr = solve_dare(A, B, bench_Q(), scalar(1.0));
  const BoxSet X = box2(-0.1, 1.1, -5.0, 5.0);
  const BoxSet U(VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0));
  const BoxSet W = box2(0.0, 0.0, -0.033, 0.033);
  const TighteningSequence t = tighten_sequences(A, B, lqr.K, X, U, W, 20);
  for (std::size_t i = 0; i + 1 < t.state.size(); ++i) {
    EXPECT_TRUE(t.state[i + 1].subset_of(t.state[i], 1e-15)) << "stage " << i;
  }
  for (std::size_t i = 0; i + 1 < t.input.size(); ++i) {
    EXPECT_TRUE(t.input[i + 1].subset_of(t.input[i], 1e-15)) << "stage " << i;
  }

  // Random box minus random zonotope.
  for (int trial = 0; trial < 5; ++trial) {
    const BoxSet box = box2(-1.0 - uni(rng), 1.0 + uni(rng), -2.0 - uni(rng), 2.0 + uni(rng));
    MatrixXd g(2, 3);
    for (int k = 0; k < g.size(); ++k) g.data()[k] = 0.3 * (uni(rng) - 0.5);
    const Zonotope z(Vector2d(0.1 * (uni(rng) - 0.5), 0.1 * (uni(rng) - 0.5)), g);
    const BoxSet diff = pontryagin_difference(box, z);
    ASSERT_FALSE(diff.empty());
    for (int s = 0; s < 1000; ++s) {
      Vector2d x;
      for (int d = 0; d < 2; ++d) x[d] = diff.lower[d] + uni(rng) * (diff.upper[d] - diff.lower[d]);
      VectorXd xi(3);
      for (int k = 0; k < 3; ++k) xi[k] = 2.0 * uni(rng) - 1.0;
      const Vector2d zz = z.center + g * xi;
      EXPECT_TRUE(box.contains(x + zz, 1e-12));
    }
  }
}

TEST(Tightening, TooLargeDisturbanceIsInfeasible) {
  const BoxSet X = box2(-0.1, 1.1, -5.0, 5.0);
  const BoxSet U(VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0));
  const BoxSet W = box2(0.0, 0.0, -3.0, 3.0);
  const LqrSolution lqr = solve_dare(bench_A(), bench_B(), bench_Q(), scalar(1.0));
  EXPECT_THROW(tighten_sequences(bench_A(), bench_B(), lqr.K, X, U, W, 20), Error);
}

TEST(Polytope, RedundancyRemovalKeepsSet) {
  Polytope p = box_polytope(box2(-1.0, 1.0, -1.0, 1.0));
  p.normals.conservativeResize(5, 2);
  p.offsets.conservativeResize(5);
  p.normals.row(4) << 1.0, 1.0;
  p.offsets[4] = 5.0;  // does not cut the box
  const Polytope r = remove_redundant(p);
  EXPECT_EQ(r.num_faces(), 4);
  EXPECT_FALSE(is_empty(r));
}

TEST(Polytope, LinearProgramOnBox) {
  const Polytope p = box_polytope(box2(-1.0, 2.0, -3.0, 0.5));
  const LpResult r = maximize_linear(Vector2d(1.0, -1.0), p);
  ASSERT_EQ(r.status, LpResult::Status::Optimal);
  EXPECT_NEAR(r.value, 5.0, 1e-12);
}

TEST(Rci, ZeroDynamicsGivesConstraintPolytope) {
  // A + BK = 0 with K = (-1, 0) for A = [[1,0],[0,0]], B = (1, 0).
  MatrixXd A = MatrixXd::Zero(2, 2);
  A(0, 0) = 1.0;
  MatrixXd B(2, 1);
  B << 1.0, 0.0;
  MatrixXd K(1, 2);
  K << -1.0, 0.0;
  const BoxSet Xn = box2(-1.0, 1.0, -2.0, 2.0);
  const BoxSet U(VectorXd::Constant(1, -0.5), VectorXd::Constant(1, 0.5));
  const Polytope omega = compute_rci(A, B, K, Xn, U, Zonotope::point(Vector2d::Zero()));
  // {x in Xn : |x1| <= 0.5}
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uni(-3.0, 3.0);
  for (int s = 0; s < 2000; ++s) {
    const Vector2d x(uni(rng), uni(rng));
    const bool expected = Xn.contains(x) && std::abs(x[0]) <= 0.5;
    if (std::abs(std::abs(x[0]) - 0.5) < 1e-9) continue;
    EXPECT_EQ(omega.contains(x, 1e-12), expected);
  }
}

TEST(Rci, BenchmarkSamplingVerifier) {
  const MatrixXd A = bench_A();
  const MatrixXd B = bench_B();
  const LqrSolution lqr = solve_dare(A, B, bench_Q(), scalar(1.0));
  const BoxSet X = box2(-0.1, 1.1, -5.0, 5.0);
  const BoxSet U(VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0));
  const BoxSet W = box2(0.0, 0.0, -0.033, 0.033);
  const int N = 20;
  const TighteningSequence t = tighten_sequences(A, B, lqr.K, X, U, W, N);
  const Polytope omega = compute_rci(A, B, lqr.K, t.state[N], t.input[N - 1], t.terminal_disturbance);
  EXPECT_TRUE(omega.contains(Vector2d::Zero()));

  const std::vector<Vector2d> vs = vertices(omega);
  ASSERT_GE(vs.size(), 3u);
  const MatrixXd Ak = A + B * lqr.K;
  const Zonotope& d = t.terminal_disturbance;
  std::vector<VectorXd> dverts;
  for (int mask = 0; mask < (1 << d.order()); ++mask) {
    VectorXd xi(d.order());
    for (int k = 0; k < d.order(); ++k) xi[k] = (mask >> k) & 1 ? 1.0 : -1.0;
    dverts.push_back(d.center + d.generators * xi);
  }
  int violations = 0;
  for (int s = 0; s < 1000; ++s) {
    const double pos = static_cast<double>(s) / 1000.0 * static_cast<double>(vs.size());
    const auto e = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(e);
    const Vector2d x = (1.0 - frac) * vs[e] + frac * vs[(e + 1) % vs.size()];
    if (!t.state[N].contains(x, 1e-9)) ++violations;
    if (!t.input[N - 1].contains(lqr.K * x, 1e-9)) ++violations;
    for (const auto& w : dverts) {
      if (!omega.contains(Ak * x + w, 1e-9)) ++violations;
    }
  }
  EXPECT_EQ(violations, 0);
}
