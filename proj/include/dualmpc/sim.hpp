#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dualmpc/config.hpp"
#include "dualmpc/error.hpp"
#include "dualmpc/gp.hpp"

namespace dualmpc::sim {

/// One closed-loop sample: the state at t = k Ts and what the controller did there.
struct StepRecord {
  int k = 0;
  double t = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double u = 0.0;
  std::string status;
  double solve_ms = 0.0;  // all OCP solves of the step (baseline included)
  double J = 0.0;         // tracking cost of the applied plan
  double J_B = 0.0;
  double Delta = 0.0;
  double Y = 0.0;  // ledger after the update of this step
  double H = 0.0;
  int gp_size = 0;
  double max_sigma_x = 0.0;
  double slack = 0.0;
  bool assumption2 = true;
  double kkt = 0.0;
  // Diagnostics beyond the fixed column set.
  bool contingency_ok = true;  // x_bar within the tightened sets and terminal set
  bool cov_psd = true;
  double budget_mean = 0.0;  // Delta bounds of the step
  double budget_max = 0.0;
  bool fallback = false;  // learning solve rejected, baseline applied
};

struct SimLog {
  ControllerKind controller = ControllerKind::Rmpc;
  std::vector<StepRecord> records;
  Eigen::Vector2d final_state = Eigen::Vector2d::Zero();  // x at t = duration
  double final_time = 0.0;
  gp::GpDataset dataset;
  std::optional<ErrorKind> error;
  std::string error_message;
  std::vector<std::string> warnings;
};

/// Fixed CSV column order of StepRecord.
const std::vector<std::string>& csv_columns();

struct Metrics {
  std::string controller;
  double e_ss_5s_pct = 0.0;
  double e_ss_10s_pct = 0.0;
  double max_violation = 0.0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double cum_J = 0.0;
  double cum_Delta = 0.0;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Simulates `config.controller` (or `controller` when given) on the plant.
/// An RmpcInfeasible failure ends the run; the partial log is returned with
/// `error` set.
SimLog run_closed_loop(const ScenarioConfig& config, const StepCallback& on_step = {});
SimLog run_closed_loop(const ScenarioConfig& config, ControllerKind controller,
                       const StepCallback& on_step = {});

/// Relative x1 error at time t in percent. The state is the last sample with
/// time <= t; the reference is the setpoint in force just before t.
double steady_state_error_pct(const SimLog& log, const ScenarioConfig& config, double t);

Metrics compute_metrics(const SimLog& log, const ScenarioConfig& config);

struct Comparison {
  std::vector<SimLog> logs;
  std::vector<Metrics> metrics;
};

/// Called once per run on that run's copy of the config (to attach a trace
/// stream, say); the returned callback observes the run's steps. Runs are
/// concurrent, so both must be safe to call from worker threads.
using RunSetup = std::function<StepCallback(ControllerKind, ScenarioConfig&)>;

/// The four controllers on the same scenario, run concurrently. A failing run
/// keeps its partial log and error; the others proceed.
Comparison run_comparison(const ScenarioConfig& config, const RunSetup& setup = {});

/// Max over x1 in the state set of |GP mean| against the W bound in the residual channel.
bool assumption2_holds(const gp::GpModel& gp, const ScenarioConfig& config, int grid = 41);

}  // namespace dualmpc::sim
