#include "dualmpc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>

#include "dualmpc/model.hpp"
#include "dualmpc/ocp.hpp"

namespace dualmpc::sim {

using Eigen::Matrix2d;

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "k",     "t",      "x1",      "x2",          "u",     "status",      "solve_ms",       "J",
      "J_B",   "Delta",  "Y",       "H",           "gp_size", "max_sigma_x", "slack",        "assumption2",
      "kkt",   "contingency_ok", "cov_psd", "budget_mean", "budget_max", "fallback"};
  return cols;
}

bool assumption2_holds(const gp::GpModel& gp, const ScenarioConfig& config, int grid) {
  const model::DiscreteModel m = model::make_nominal_model(config.plant);
  const Eigen::RowVector2d pinv = m.residual_pinv();
  const setops::BoxSet& W = config.mpc.W;
  double lo = 0.0;
  double hi = 0.0;
  for (int j = 0; j < 2; ++j) {
    const double a = pinv[j] * W.lower[j];
    const double b = pinv[j] * W.upper[j];
    lo += std::min(a, b);
    hi += std::max(a, b);
  }
  const double z0 = config.mpc.X.lower[0];
  const double z1 = config.mpc.X.upper[0];
  for (int i = 0; i < grid; ++i) {
    const double z = grid > 1 ? z0 + (z1 - z0) * i / (grid - 1) : 0.5 * (z0 + z1);
    const double d = gp.predict(z).mean;
    if (d < lo || d > hi) return false;
  }
  return true;
}

namespace {

bool covariance_psd(const std::vector<Matrix2d>& cov) {
  for (const Matrix2d& s : cov) {
    if (std::abs(s(0, 1) - s(1, 0)) > 1e-12) return false;
    if (Eigen::SelfAdjointEigenSolver<Matrix2d>(s, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() < -1e-10)
      return false;
  }
  return true;
}

double max_sigma(const std::vector<Matrix2d>& cov) {
  double m = 0.0;
  for (const Matrix2d& s : cov) m = std::max(m, std::sqrt(std::max(s.diagonal().maxCoeff(), 0.0)));
  return m;
}

// Robust constraints of the safe branch: tightened sets along the horizon
// and the terminal set at the end.
bool robust_branch_ok(const ocp::OcpData& data, const std::vector<Vector2d>& x) {
  const int N = data.horizon();
  if (static_cast<int>(x.size()) != N + 1) return false;
  for (int i = 0; i <= N; ++i)
    if (!data.sets.state[static_cast<std::size_t>(i)].contains(x[static_cast<std::size_t>(i)], 1e-6)) return false;
  return data.terminal.contains(x.back(), 1e-6);
}

class Controller {
 public:
  Controller(const ScenarioConfig& c, ControllerKind kind)
      : config_(c), kind_(kind), model_(model::make_nominal_model(c.plant)),
        data_(ocp::make_ocp_data(model_, c.mpc)) {
    ledger_.params = c.learning;
  }

  const model::DiscreteModel& model() const { return model_; }

  // Fills everything but the state, time and input bookkeeping of `rec`.
  double step(int k, const Vector2d& x, const gp::GpDataset& dataset, StepRecord& rec,
              std::vector<std::string>& warnings) {
    const double t = k * config_.plant.sample_time;
    const ocp::CostWeights w = ocp::make_weights(data_, config_.setpoint(t), config_.lambda);
    const nlp::SqpOptions& opt = config_.solver;

    if (kind_ != ControllerKind::Rmpc && (k % config_.gp.refit_every == 0 || !gp_fitted_)) refit(x, dataset);

    ocp::OcpSolution sol;
    switch (kind_) {
      case ControllerKind::Rmpc: {
        sol = ocp::solve_rmpc(data_, w, x, guess(prev_, x), opt);
        rec.solve_ms = sol.solve_ms;
        rec.J = sol.J_bar;
        prev_ = sol;
        break;
      }
      case ControllerKind::Passive: {
        sol = ocp::solve_passive(data_, w, gp_, x, guess(prev_, x), opt);
        rec.solve_ms = sol.solve_ms;
        rec.J = sol.J_hat;
        rec.J_B = sol.J_hat;
        prev_ = sol;
        break;
      }
      case ControllerKind::Active:
      case ControllerKind::SingleActive: {
        const bool contingency = kind_ == ControllerKind::Active;
        const ocp::OcpSolution base = contingency
                                          ? ocp::solve_passive(data_, w, gp_, x, guess(prev_base_, x), opt)
                                          : ocp::solve_single_baseline(data_, w, gp_, x, guess(prev_base_, x), opt);
        prev_base_ = base;
        const double J_B = ocp::baseline_cost(base);
        const double jp = ledger_.j_plus(w, J_B);
        const ocp::Budget budget = ledger_.budget(J_B, jp);
        const ocp::OcpSolution act = contingency ? ocp::solve_active(data_, w, gp_, x, base, budget, opt)
                                                 : ocp::solve_single_active(data_, w, gp_, x, base, budget, opt);
        rec.solve_ms = base.solve_ms + act.solve_ms;
        rec.budget_mean = budget.bound_mean;
        rec.budget_max = budget.bound_max;
        if (act.feasible) {
          sol = act;
        } else {
          warnings.push_back(std::string(to_string(ErrorKind::AssumptionViolation)) + " at k=" +
                             std::to_string(k) + ": learning OCP " + nlp::to_string(act.status) +
                             " (violation " + std::to_string(act.violation) + "), baseline applied");
          sol = base;
          sol.Delta = 0.0;
          rec.fallback = true;
        }
        ledger_ = ocp::update_ledger(ledger_, jp, sol.Delta);
        ocp::record_plan(ledger_, sol);
        rec.J = sol.J_hat;
        rec.J_B = J_B;
        rec.Delta = sol.Delta;
        rec.Y = ledger_.Y;
        break;
      }
    }
    rec.status = nlp::to_string(sol.status);
    rec.H = sol.H;
    rec.slack = sol.slack_sum;
    rec.kkt = sol.kkt;
    rec.max_sigma_x = max_sigma(sol.state_cov);
    rec.cov_psd = covariance_psd(sol.state_cov);
    rec.contingency_ok = robust_branch_ok(data_, kind_ == ControllerKind::SingleActive ? sol.x_hat : sol.x_bar);
    rec.gp_size = static_cast<int>(dataset.size());
    rec.assumption2 = kind_ == ControllerKind::Rmpc || assumption2_holds(gp_, config_);
    last_x_hat_ = sol.x_hat;
    return sol.u_applied;
  }

 private:
  ocp::Guess guess(const std::optional<ocp::OcpSolution>& prev, const Vector2d& x) const {
    return prev ? ocp::shift_guess(*prev) : ocp::hover_guess(data_, x);
  }

  void refit(const Vector2d& x, const gp::GpDataset& dataset) {
    const GpSettings& g = config_.gp;
    if (g.mode == gp::GpMode::Exact || dataset.empty()) {
      gp_ = gp::GpModel::fit(dataset, g.hyper, gp::GpMode::Exact);
    } else {
      std::vector<double> traj;
      for (const Vector2d& s : last_x_hat_) traj.push_back(s[0]);
      if (traj.empty()) traj.push_back(x[0]);
      const std::vector<double> inducing =
          g.inducing == InducingRule::Feature
              ? gp::select_inducing(traj, g.inducing_points, g.hyper.length_scale)
              : gp::select_inducing_by_time(traj, g.inducing_points);
      gp_ = gp::GpModel::fit(dataset, g.hyper, gp::GpMode::Sparse, inducing);
    }
    gp_fitted_ = true;
  }

  const ScenarioConfig& config_;
  ControllerKind kind_;
  model::DiscreteModel model_;
  ocp::OcpData data_;
  gp::GpModel gp_;
  bool gp_fitted_ = false;
  ocp::LearningLedger ledger_;
  std::optional<ocp::OcpSolution> prev_;
  std::optional<ocp::OcpSolution> prev_base_;
  std::vector<Vector2d> last_x_hat_;
};

}  // namespace

SimLog run_closed_loop(const ScenarioConfig& config, const StepCallback& on_step) {
  return run_closed_loop(config, config.controller, on_step);
}

SimLog run_closed_loop(const ScenarioConfig& config, ControllerKind kind, const StepCallback& on_step) {
  config.validate();
  SimLog log;
  log.controller = kind;
  Vector2d x = config.x0;
  log.final_state = x;
  const double Ts = config.plant.sample_time;
  const int steps = config.num_steps();
  if (steps == 0) return log;

  Controller controller(config, kind);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int k = 0; k < steps; ++k) {
    StepRecord rec;
    rec.k = k;
    rec.t = k * Ts;
    rec.x1 = x[0];
    rec.x2 = x[1];
    double u = 0.0;
    try {
      u = controller.step(k, x, log.dataset, rec, log.warnings);
    } catch (const Error& e) {
      log.error = e.kind();
      log.error_message = "k=" + std::to_string(k) + ": " + e.what();
      break;
    }
    rec.u = u;
    Vector2d v = Vector2d::Zero();
    if (config.has_noise())
      for (int j = 0; j < 2; ++j)
        v[j] = config.noise_lower[j] + (config.noise_upper[j] - config.noise_lower[j]) * unit(rng);
    const Vector2d xn = model::plant_step(config.plant, controller.model(), x, u, v, config.integrator);
    log.dataset.add(k, x[0], model::residual_measurement(controller.model(), xn, x, u), config.gp.dedup_tol);
    if (config.gp.max_points > 0) log.dataset.enforce_cap(static_cast<std::size_t>(config.gp.max_points));
    log.records.push_back(rec);
    if (on_step) on_step(rec);
    x = xn;
    log.final_state = x;
    log.final_time = (k + 1) * Ts;
  }
  return log;
}

double steady_state_error_pct(const SimLog& log, const ScenarioConfig& config, double t) {
  const double tol = 1e-9;
  double x1 = std::numeric_limits<double>::quiet_NaN();
  for (const StepRecord& r : log.records)
    if (r.t <= t + tol) x1 = r.x1;
  if (!log.records.empty() && log.final_time <= t + tol && log.final_time > log.records.back().t)
    x1 = log.final_state[0];
  const double ref = config.setpoint(t - 0.5 * config.plant.sample_time)[0];
  return std::abs(x1 - ref) / std::abs(ref) * 100.0;
}

Metrics compute_metrics(const SimLog& log, const ScenarioConfig& config) {
  if (log.records.empty()) throw Error(ErrorKind::InvalidArgument, "compute_metrics: empty log");
  Metrics m;
  m.controller = to_string(log.controller);
  m.e_ss_5s_pct = steady_state_error_pct(log, config, 5.0);
  m.e_ss_10s_pct = steady_state_error_pct(log, config, 10.0);
  const setops::BoxSet& X = config.mpc.X;
  auto violation = [&](double x1, double x2) {
    const Vector2d s(x1, x2);
    double v = 0.0;
    for (int j = 0; j < 2; ++j) v = std::max({v, s[j] - X.upper[j], X.lower[j] - s[j]});
    return v;
  };
  double total = 0.0;
  for (const StepRecord& r : log.records) {
    m.max_violation = std::max(m.max_violation, violation(r.x1, r.x2));
    total += r.solve_ms;
    m.max_solve_ms = std::max(m.max_solve_ms, r.solve_ms);
    m.cum_J += r.J;
    m.cum_Delta += r.Delta;
  }
  m.max_violation = std::max(m.max_violation, violation(log.final_state[0], log.final_state[1]));
  m.mean_solve_ms = total / static_cast<double>(log.records.size());
  return m;
}

Comparison run_comparison(const ScenarioConfig& config, const RunSetup& setup) {
  config.validate();
  const ControllerKind kinds[] = {ControllerKind::Rmpc, ControllerKind::Passive, ControllerKind::Active,
                                  ControllerKind::SingleActive};
  std::vector<std::future<SimLog>> jobs;
  for (ControllerKind kind : kinds) {
    jobs.push_back(std::async(std::launch::async, [&config, &setup, kind] {
      try {
        ScenarioConfig own = config;
        const StepCallback on_step = setup ? setup(kind, own) : StepCallback{};
        return run_closed_loop(own, kind, on_step);
      } catch (const Error& e) {
        SimLog log;
        log.controller = kind;
        log.error = e.kind();
        log.error_message = e.what();
        return log;
      }
    }));
  }
  Comparison out;
  for (auto& j : jobs) out.logs.push_back(j.get());
  for (const SimLog& log : out.logs) {
    if (log.records.empty()) {
      Metrics m;
      m.controller = to_string(log.controller);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      m.e_ss_5s_pct = m.e_ss_10s_pct = m.max_violation = m.mean_solve_ms = m.max_solve_ms = nan;
      out.metrics.push_back(m);
    } else {
      out.metrics.push_back(compute_metrics(log, config));
    }
  }
  return out;
}

}  // namespace dualmpc::sim
