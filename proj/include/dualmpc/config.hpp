#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dualmpc/gp.hpp"
#include "dualmpc/model.hpp"
#include "dualmpc/ocp.hpp"
#include "dualmpc/sqp.hpp"

namespace dualmpc::sim {

using Eigen::Vector2d;

enum class ControllerKind { Rmpc, Passive, Active, SingleActive };

const char* to_string(ControllerKind c);
ControllerKind parse_controller(const std::string& s);

enum class InducingRule { Feature, Time };

struct Setpoint {
  double time = 0.0;
  Vector2d x_ref = Vector2d(1.0, 0.0);
};

struct GpSettings {
  gp::GpHyper hyper;
  gp::GpMode mode = gp::GpMode::Exact;
  int inducing_points = 4;
  InducingRule inducing = InducingRule::Feature;
  int refit_every = 1;
  int max_points = 0;  // 0: unbounded
  double dedup_tol = 1e-6;
};

struct ScenarioConfig {
  model::PlantParams plant;
  model::Integrator integrator = model::Integrator::Euler;
  Vector2d noise_lower = Vector2d::Zero();
  Vector2d noise_upper = Vector2d::Zero();

  ocp::OcpSettings mpc;
  double lambda = 1e-3;

  GpSettings gp;
  ocp::LearningParams learning;

  double duration = 10.0;
  std::vector<Setpoint> setpoints{{0.0, Vector2d(1.0, 0.0)}, {5.0, Vector2d(1.095, 0.0)}};
  Vector2d x0 = Vector2d::Zero();
  ControllerKind controller = ControllerKind::Active;
  std::uint64_t seed = 0;

  nlp::SqpOptions solver;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  int num_steps() const;
  /// Setpoint in force at time t (last entry with time <= t).
  Vector2d setpoint(double t) const;
  bool has_noise() const;
};

/// The benchmark scenario with every default spelled out.
ScenarioConfig benchmark_config();

/// INI-style text: `[section]` headers, `key = value` lines, `#` comments.
/// Unknown sections or keys and malformed values raise ConfigError with the
/// line number; missing sections raise ConfigError naming the section.
ScenarioConfig parse_config(std::istream& is);
ScenarioConfig load_config(const std::string& path);

/// Writes every field; parse_config reads it back to an identical config.
void write_config(std::ostream& os, const ScenarioConfig& config);

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b);

}  // namespace dualmpc::sim
