#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dualmpc/gp.hpp"

using namespace dualmpc::gp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GpDataset random_dataset(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> z(-0.1, 1.1);
  std::uniform_real_distribution<double> y(-0.05, 0.05);
  GpDataset d;
  for (int i = 0; i < n; ++i) d.add(i, z(rng), y(rng));
  return d;
}

// Posterior by explicit inversion, no factorization.
GpPrediction brute_force(const GpDataset& d, const GpHyper& h, double z) {
  const auto n = static_cast<Eigen::Index>(d.size());
  MatrixXd K(n, n);
  VectorXd k(n);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k[i] = kernel(h, z, d.inputs[i]);
    y[i] = d.targets[i];
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = kernel(h, d.inputs[i], d.inputs[j]);
  }
  const MatrixXd Kinv = (K + (h.sigma_v2 + h.jitter) * MatrixXd::Identity(n, n)).inverse();
  return {k.dot(Kinv * y), kernel(h, z, z) - k.dot(Kinv * k)};
}

}  // namespace

TEST(Kernel, Values) {
  const GpHyper h;
  EXPECT_DOUBLE_EQ(kernel(h, 0.4, 0.4), 0.33);
  EXPECT_NEAR(kernel(h, 0.0, 0.3), 0.33 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(kernel(h, 0.0, 0.3), 0.20016, 1e-5);
  EXPECT_LT(kernel(h, 0.0, 3.0), 1e-12);
}

TEST(GpFit, PriorModel) {
  const GpModel m = GpModel::fit(GpDataset{}, GpHyper{});
  for (double z : {-1.0, 0.0, 0.5, 3.0}) {
    const GpPredictionGrad p = m.predict_grad(z);
    EXPECT_EQ(p.mean, 0.0);
    EXPECT_DOUBLE_EQ(p.variance, 0.33);
    EXPECT_EQ(p.dmean, 0.0);
    EXPECT_EQ(p.dvariance, 0.0);
  }
}

TEST(GpFit, SinglePointInterpolates) {
  GpDataset d;
  d.add(0, 0.5, 0.2);
  const GpModel m = GpModel::fit(d, GpHyper{});
  const GpPredictionGrad p = m.predict_grad(0.5);
  EXPECT_NEAR(p.mean, 0.2, 1e-6);
  EXPECT_LE(p.variance, 1e-6);
  EXPECT_NEAR(p.dvariance, 0.0, 1e-12);
}

TEST(GpFit, FarFromDataReturnsPrior) {
  std::mt19937 rng(11);
  const GpDataset d = random_dataset(rng, 5);
  const GpModel m = GpModel::fit(d, GpHyper{});
  const double ynorm = Eigen::Map<const VectorXd>(d.targets.data(), 5).norm();
  const GpPrediction p = m.predict(1.1 + 3.0);
  EXPECT_LE(std::abs(p.mean), 1e-9 * ynorm);
  EXPECT_GE(p.variance, 0.33 - 1e-9);
}

TEST(GpFit, SparseWithTrainingInducingMatchesExact) {
  // Smooth targets on spread inputs, as produced by the closed loop; random
  // targets on nearly coincident inputs make both fits jitter-dominated.
  std::mt19937 rng(5);
  GpDataset d;
  for (int i = 0; i < 6; ++i) {
    const double z = -0.1 + 0.2 * i + 0.05 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    d.add(i, z, 0.033 * (1.0 - std::exp(-z)) * z);
  }
  const GpHyper h;
  const GpModel exact = GpModel::fit(d, h, GpMode::Exact);
  const GpModel sparse = GpModel::fit(d, h, GpMode::Sparse, d.inputs);
  std::uniform_real_distribution<double> q(-0.5, 1.5);
  for (int i = 0; i < 100; ++i) {
    const double z = q(rng);
    const GpPrediction a = exact.predict(z);
    const GpPrediction b = sparse.predict(z);
    EXPECT_NEAR(a.mean, b.mean, 1e-6);
    EXPECT_NEAR(a.variance, b.variance, 1e-6);
  }
}

TEST(GpFit, SparseNeedsInducing) {
  GpDataset d;
  d.add(0, 0.1, 0.0);
  EXPECT_ANY_THROW(GpModel::fit(d, GpHyper{}, GpMode::Sparse));
}

TEST(GpPredict, BruteForceOracle) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> q(-0.3, 1.3);
  for (int n = 1; n <= 5; ++n) {
    const GpDataset d = random_dataset(rng, n);
    const GpHyper h;
    const GpModel m = GpModel::fit(d, h);
    for (int i = 0; i < 20; ++i) {
      const double z = q(rng);
      const GpPrediction a = m.predict(z);
      const GpPrediction b = brute_force(d, h, z);
      EXPECT_NEAR(a.mean, b.mean, 1e-10);
      EXPECT_NEAR(a.variance, std::max(b.variance, 0.0), 1e-10);
    }
  }
}

TEST(GpPredict, DerivativesMatchFiniteDifferences) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> q(-0.2, 1.2);
  for (GpMode mode : {GpMode::Exact, GpMode::Sparse}) {
    const GpDataset d = random_dataset(rng, 5);
    const std::vector<double> ind = select_inducing(d.inputs, 4, 0.3);
    const GpModel m = GpModel::fit(d, GpHyper{}, mode, ind);
    for (int i = 0; i < 20; ++i) {
      const double z = q(rng);
      const double h = 1e-5;
      const GpSecondOrder s = m.predict_second_order(z);
      const GpSecondOrder sp = m.predict_second_order(z + h);
      const GpSecondOrder sm = m.predict_second_order(z - h);
      const double fd_mean = (sp.mean - sm.mean) / (2 * h);
      const double fd_var = (sp.variance - sm.variance) / (2 * h);
      if (sm.variance < 1e-7 || sp.variance < 1e-7) continue;  // clamp region
      EXPECT_NEAR(s.dmean, fd_mean, 1e-6 * std::max(1.0, std::abs(fd_mean)));
      EXPECT_NEAR(s.dvariance, fd_var, 1e-6 * std::max(1.0, std::abs(fd_var)));
      EXPECT_NEAR(s.d2mean, (sp.dmean - sm.dmean) / (2 * h), 1e-5 * std::max(1.0, std::abs(s.d2mean)));
      EXPECT_NEAR(s.d2variance, (sp.dvariance - sm.dvariance) / (2 * h),
                  1e-5 * std::max(1.0, std::abs(s.d2variance)));
    }
  }
}

TEST(GpPredict, VarianceBoundedByPrior) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> q(-2.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    const GpDataset d = random_dataset(rng, 8);
    const GpModel exact = GpModel::fit(d, GpHyper{});
    const GpModel sparse = GpModel::fit(d, GpHyper{}, GpMode::Sparse, select_inducing(d.inputs, 4, 0.3));
    for (int i = 0; i < 50; ++i) {
      const double z = q(rng);
      for (const GpModel* m : {&exact, &sparse}) {
        const GpPrediction p = m->predict(z);
        EXPECT_GE(p.variance, 0.0);
        EXPECT_LE(p.variance, 0.33 + 1e-9);
      }
    }
  }
}

TEST(GpPredict, MoreDataNeverIncreasesVariance) {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> q(-0.5, 1.5);
  GpDataset d = random_dataset(rng, 2);
  GpModel prev = GpModel::fit(d, GpHyper{});
  for (int k = 0; k < 6; ++k) {
    d.add(10 + k, q(rng), 0.01 * k);
    const GpModel next = GpModel::fit(d, GpHyper{});
    for (int i = 0; i < 30; ++i) {
      const double z = q(rng);
      EXPECT_LE(next.predict(z).variance, prev.predict(z).variance + 1e-8);
    }
    prev = next;
  }
}

TEST(GpPredict, PermutationInvariant) {
  std::mt19937 rng(17);
  const GpDataset d = random_dataset(rng, 6);
  GpDataset r;
  for (std::size_t i = d.size(); i-- > 0;) r.add(d.steps[i], d.inputs[i], d.targets[i]);
  const GpModel a = GpModel::fit(d, GpHyper{});
  const GpModel b = GpModel::fit(r, GpHyper{});
  for (double z : {-0.1, 0.33, 0.8, 1.05}) {
    EXPECT_NEAR(a.predict(z).mean, b.predict(z).mean, 1e-10);
    EXPECT_NEAR(a.predict(z).variance, b.predict(z).variance, 1e-10);
  }
}

TEST(GpDataset, DedupAndCap) {
  GpDataset d;
  EXPECT_TRUE(d.add(0, 0.5, 1.0));
  EXPECT_FALSE(d.add(1, 0.5 + 5e-7, 1.0));
  EXPECT_TRUE(d.add(2, 0.6, 1.0));
  EXPECT_TRUE(d.add(3, 0.7, 1.0));
  d.enforce_cap(2);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.steps.front(), 2);
}

TEST(GpDataset, CsvRoundTrip) {
  std::mt19937 rng(1);
  const GpDataset d = random_dataset(rng, 4);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const GpDataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.steps, d.steps);
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.targets, d.targets);
}

TEST(Inducing, Selection) {
  const std::vector<double> traj{0.0, 0.25, 1.0, 0.5};
  const std::vector<double> a = select_inducing(traj, 4, 0.3);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_NEAR(a[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(a[2], 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(select_inducing(traj, 1, 0.3)[0], 0.5);
  const std::vector<double> flat(5, 0.5);
  const std::vector<double> b = select_inducing(flat, 3, 0.3);
  EXPECT_NEAR(b[0], 0.35, 1e-15);
  EXPECT_NEAR(b[1], 0.5, 1e-15);
  EXPECT_NEAR(b[2], 0.65, 1e-15);
  const std::vector<double> c = select_inducing_by_time(traj, 2);
  EXPECT_EQ(c, (std::vector<double>{0.0, 0.5}));
}
