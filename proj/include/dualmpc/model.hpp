#pragma once

#include <Eigen/Dense>

namespace dualmpc::model {

using Eigen::Matrix2d;
using Eigen::Vector2d;

/// Mass-spring-damper with an exponentially softening spring.
struct PlantParams {
  double mass = 1.0;         // [kg]
  double damping = 1.0;      // [Ns/m]
  double spring = 0.33;      // [N/m]
  double sample_time = 0.1;  // [s]

  void validate() const;
};

enum class Integrator { Euler, Rk4 };

/// x+ = A x + Bu u + Bg g(x) with g the unknown residual.
struct DiscreteModel {
  Matrix2d A;
  Vector2d Bu;
  Vector2d Bg;
  double sample_time = 0.1;

  /// Left pseudo-inverse (Bg' Bg)^-1 Bg'.
  Eigen::RowVector2d residual_pinv() const;
};

/// Forward-Euler discretization of the linear part of the plant.
DiscreteModel make_nominal_model(const PlantParams& p);

Vector2d nominal_step(const DiscreteModel& m, const Vector2d& x, double u);

/// Discrete-time residual Ts * (-c_k/m) (exp(-x1) - 1) x1 entering through Bg.
double true_residual(const PlantParams& p, const Vector2d& x);

/// Continuous-time vector field of the full plant.
Vector2d plant_vector_field(const PlantParams& p, const Vector2d& x, double u);

/// One zero-order-hold sample of the true plant plus an additive disturbance.
/// With Euler integration this equals nominal_step + Bg * true_residual + v.
Vector2d plant_step(const PlantParams& p, const DiscreteModel& m, const Vector2d& x,
                    double u, const Vector2d& v, Integrator integrator = Integrator::Euler);

/// y = Bg^+ (x_next - f(x, u)).
double residual_measurement(const DiscreteModel& m, const Vector2d& x_next,
                            const Vector2d& x, double u);

struct Jacobian {
  Matrix2d dx;
  Vector2d du;
};

Jacobian nominal_jacobian(const DiscreteModel& m, const Vector2d& x, double u);

/// Input that holds x = (x1, 0) at rest under the nominal model.
double nominal_equilibrium_input(const DiscreteModel& m, double x1);

}  // namespace dualmpc::model
