#include <gtest/gtest.h>

#include <cmath>

#include "dualmpc/error.hpp"
#include "dualmpc/model.hpp"

using namespace dualmpc;
using namespace dualmpc::model;
using Eigen::Vector2d;

namespace {
const PlantParams kParams{};
const DiscreteModel kModel = make_nominal_model(kParams);
}  // namespace

TEST(Model, EulerMatrices) {
  EXPECT_NEAR(kModel.A(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(kModel.A(0, 1), 0.1, 1e-15);
  EXPECT_NEAR(kModel.A(1, 0), -0.033, 1e-15);
  EXPECT_NEAR(kModel.A(1, 1), 0.9, 1e-15);
  EXPECT_NEAR(kModel.Bu[0], 0.0, 1e-15);
  EXPECT_NEAR(kModel.Bu[1], -0.1, 1e-15);
  EXPECT_EQ(kModel.Bg, Vector2d(0.0, 1.0));
}

TEST(Model, NominalEquilibrium) {
  EXPECT_EQ(nominal_step(kModel, Vector2d::Zero(), 0.0), Vector2d::Zero());
  const Vector2d x1 = nominal_step(kModel, Vector2d(1.0, 0.0), -0.33);
  EXPECT_NEAR(x1[0], 1.0, 1e-15);
  EXPECT_NEAR(x1[1], 0.0, 1e-15);
  EXPECT_NEAR(nominal_equilibrium_input(kModel, 1.0), -0.33, 1e-15);
}

TEST(Model, TrueResidualValues) {
  EXPECT_EQ(true_residual(kParams, Vector2d(0.0, 0.0)), 0.0);
  const double r1 = 0.1 * -0.33 * (std::exp(-1.0) - 1.0);
  EXPECT_NEAR(true_residual(kParams, Vector2d(1.0, 0.0)), r1, 1e-16);
  EXPECT_NEAR(r1, 0.020859, 1e-6);
  EXPECT_NEAR(true_residual(kParams, Vector2d(-0.1, 0.0)), 3.470e-4, 1e-7);
}

TEST(Model, PlantStepCombinesNominalAndResidual) {
  EXPECT_EQ(plant_step(kParams, kModel, Vector2d::Zero(), 0.0, Vector2d::Zero()), Vector2d::Zero());
  const Vector2d x = plant_step(kParams, kModel, Vector2d(1.0, 0.0), -0.33, Vector2d::Zero());
  EXPECT_NEAR(x[0], 1.0, 1e-15);
  EXPECT_NEAR(x[1], 0.020859, 1e-6);
  for (double x1 : {-0.1, 0.2, 0.7, 1.1}) {
    for (double u : {-5.0, 0.0, 3.0}) {
      const Vector2d s(x1, 0.3);
      const Vector2d d = plant_step(kParams, kModel, s, u, Vector2d::Zero()) - nominal_step(kModel, s, u);
      EXPECT_NEAR(d[0], 0.0, 1e-15);
      EXPECT_NEAR(d[1], true_residual(kParams, s), 1e-15);
    }
  }
}

TEST(Model, MeasurementRecoversResidual) {
  for (double x1 : {-0.1, 0.0, 0.4, 1.0, 1.1}) {
    const Vector2d x(x1, -0.2);
    const double u = 0.7;
    const Vector2d xn = plant_step(kParams, kModel, x, u, Vector2d::Zero());
    EXPECT_NEAR(residual_measurement(kModel, xn, x, u), true_residual(kParams, x), 1e-12);
  }
  EXPECT_EQ(residual_measurement(kModel, nominal_step(kModel, Vector2d(0.3, 0.1), 1.0),
                                 Vector2d(0.3, 0.1), 1.0),
            0.0);
  EXPECT_EQ(kModel.residual_pinv(), Eigen::RowVector2d(0.0, 1.0));
}

TEST(Model, ResidualBoundedOnStateSet) {
  double worst = 0.0;
  for (int i = 0; i <= 12000; ++i) {
    const double x1 = -0.1 + 1.2 * i / 12000.0;
    worst = std::max(worst, std::abs(true_residual(kParams, Vector2d(x1, 0.0))));
  }
  EXPECT_LE(worst, 0.33);
  EXPECT_LE(worst, 0.033);
}

TEST(Model, JacobianMatchesFiniteDifferences) {
  const Vector2d x(0.5, 0.1);
  const double u = 0.2;
  const Jacobian j = nominal_jacobian(kModel, x, u);
  const double h = 1e-6;
  for (int c = 0; c < 2; ++c) {
    Vector2d e = Vector2d::Zero();
    e[c] = h;
    const Vector2d fd = (nominal_step(kModel, x + e, u) - nominal_step(kModel, x - e, u)) / (2 * h);
    EXPECT_NEAR((fd - j.dx.col(c)).cwiseAbs().maxCoeff(), 0.0, 1e-8);
  }
  const Vector2d fdu = (nominal_step(kModel, x, u + h) - nominal_step(kModel, x, u - h)) / (2 * h);
  EXPECT_NEAR((fdu - j.du).cwiseAbs().maxCoeff(), 0.0, 1e-8);
  EXPECT_EQ(j.dx.rows(), 2);
  EXPECT_EQ(j.du.rows(), 2);
}

TEST(Model, Rk4CloseToEulerForSmallStep) {
  PlantParams p = kParams;
  p.sample_time = 1e-3;
  const DiscreteModel m = make_nominal_model(p);
  const Vector2d x(0.8, 0.4);
  const Vector2d e = plant_step(p, m, x, 0.5, Vector2d::Zero(), Integrator::Euler);
  const Vector2d r = plant_step(p, m, x, 0.5, Vector2d::Zero(), Integrator::Rk4);
  EXPECT_LT((e - r).norm(), 1e-5);
}

TEST(Model, InvalidParamsRejected) {
  PlantParams p;
  p.mass = 0.0;
  EXPECT_THROW(make_nominal_model(p), Error);
}
