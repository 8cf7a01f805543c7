#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualmpc/config.hpp"

namespace dualmpc::checks {

/// Outcome of one self-contained numerical check.
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Exact GP against explicit inversion of the Gram matrix on random datasets
/// of 1..5 points (1e-10), plus noise-free interpolation at the training
/// inputs and variance within [0, sigma_f^2] everywhere.
CheckResult gp_oracle(const gp::GpHyper& hyper, int datasets = 50, std::uint64_t seed = 1);

/// FITC with the training inputs as inducing set against the exact GP at
/// `queries` points (1e-6).
CheckResult sparse_collapse(const gp::GpHyper& hyper, int queries = 100, std::uint64_t seed = 2);

/// Finite-difference derivative check of every OCP formulation at `points`
/// solved (hence feasible) points each, relative tolerance 1e-5.
CheckResult ocp_derivatives(const sim::ScenarioConfig& config, int points = 10, std::uint64_t seed = 3);

/// Sensitivity of the predicted GP variance sum to the first input under a
/// 5-point GP fitted to the true residual (central difference, delta 1e-4).
CheckResult dual_effect(const sim::ScenarioConfig& config, double* sensitivity = nullptr);

/// Samples the boundary of the terminal set and checks invariance under
/// every vertex of the terminal disturbance set, plus state and input
/// admissibility of the terminal control law.
CheckResult rci_sampling(const sim::ScenarioConfig& config, int samples = 1000);

/// DARE residual < 1e-8, P symmetric positive definite, closed loop stable.
CheckResult dare(const sim::ScenarioConfig& config);

/// QP KKT residuals on random strictly convex problems and SQP convergence on
/// small problems with known solutions.
CheckResult solver_smoke(std::uint64_t seed = 4);

/// The checks behind the `gp-check` and `solver-check` verbs.
std::vector<CheckResult> gp_suite(const sim::ScenarioConfig& config);
std::vector<CheckResult> solver_suite(const sim::ScenarioConfig& config);

}  // namespace dualmpc::checks
