#include "dualmpc/model.hpp"

#include <cmath>

#include "dualmpc/error.hpp"

namespace dualmpc::model {

void PlantParams::validate() const {
  if (!(mass > 0.0 && damping > 0.0 && spring > 0.0 && sample_time > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "PlantParams: all parameters must be positive");
  }
}

Eigen::RowVector2d DiscreteModel::residual_pinv() const {
  return Bg.transpose() / Bg.squaredNorm();
}

DiscreteModel make_nominal_model(const PlantParams& p) {
  p.validate();
  Matrix2d Ac;
  Ac << 0.0, 1.0, -p.spring / p.mass, -p.damping / p.mass;
  DiscreteModel m;
  m.A = Matrix2d::Identity() + p.sample_time * Ac;
  m.Bu = Vector2d(0.0, -p.sample_time / p.mass);
  m.Bg = Vector2d(0.0, 1.0);
  m.sample_time = p.sample_time;
  return m;
}

Vector2d nominal_step(const DiscreteModel& m, const Vector2d& x, double u) {
  return m.A * x + m.Bu * u;
}

double true_residual(const PlantParams& p, const Vector2d& x) {
  return p.sample_time * (-p.spring / p.mass) * (std::exp(-x[0]) - 1.0) * x[0];
}

Vector2d plant_vector_field(const PlantParams& p, const Vector2d& x, double u) {
  const double spring_force = p.spring * std::exp(-x[0]) * x[0];
  return {x[1], -(p.damping * x[1] + spring_force + u) / p.mass};
}

Vector2d plant_step(const PlantParams& p, const DiscreteModel& m, const Vector2d& x,
                    double u, const Vector2d& v, Integrator integrator) {
  if (integrator == Integrator::Euler) {
    return nominal_step(m, x, u) + m.Bg * true_residual(p, x) + v;
  }
  const double h = p.sample_time;
  const Vector2d k1 = plant_vector_field(p, x, u);
  const Vector2d k2 = plant_vector_field(p, x + 0.5 * h * k1, u);
  const Vector2d k3 = plant_vector_field(p, x + 0.5 * h * k2, u);
  const Vector2d k4 = plant_vector_field(p, x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + v;
}

double residual_measurement(const DiscreteModel& m, const Vector2d& x_next,
                            const Vector2d& x, double u) {
  return m.residual_pinv() * (x_next - nominal_step(m, x, u));
}

Jacobian nominal_jacobian(const DiscreteModel& m, const Vector2d& /*x*/, double /*u*/) {
  return {m.A, m.Bu};
}

double nominal_equilibrium_input(const DiscreteModel& m, double x1) {
  // Second row of A x + Bu u = x with x2 = 0.
  return -m.A(1, 0) * x1 / m.Bu[1];
}

}  // namespace dualmpc::model
