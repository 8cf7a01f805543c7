#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

#include "dualmpc/gp.hpp"
#include "dualmpc/model.hpp"
#include "dualmpc/setops.hpp"
#include "dualmpc/sqp.hpp"

namespace dualmpc::ocp {

using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

/// l(x,u) = |x - x_ref|_Q^2 + R u^2,  l_N(x) = |x - x_ref|_P^2.
struct CostWeights {
  Matrix2d Q = Eigen::Vector2d(20.0, 1.0).asDiagonal();
  double R = 1.0;
  Matrix2d P = Matrix2d::Identity();
  Vector2d x_ref = Vector2d(1.0, 0.0);
  double lambda = 1e-3;
};

double stage_cost(const CostWeights& w, const Vector2d& x, double u);
double terminal_cost(const CostWeights& w, const Vector2d& x);
/// Sum of stage costs over x_0..x_{N-1}, u_0..u_{N-1} plus the terminal cost at x_N.
double trajectory_cost(const CostWeights& w, const std::vector<Vector2d>& x, const VectorXd& u);

enum class TighteningGain { Lqr, Zero };

struct OcpSettings {
  int horizon = 20;
  Matrix2d Q = Eigen::Vector2d(20.0, 1.0).asDiagonal();
  double R = 1.0;
  setops::BoxSet X{Vector2d(-0.1, -5.0), Vector2d(1.1, 5.0)};
  setops::BoxSet U{VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0)};
  /// Residual bound in discrete time (already scaled by the sample time if needed).
  setops::BoxSet W{Vector2d(0.0, -0.033), Vector2d(0.0, 0.033)};
  TighteningGain gain = TighteningGain::Lqr;
  double slack_penalty = 1e4;
  double tightening_eps = 1e-9;
};

/// Everything that stays fixed across time steps: model, LQR terminal weight,
/// tightened sets, terminal set and the linear contingency prediction matrices.
struct OcpData {
  model::DiscreteModel model;
  OcpSettings settings;
  setops::LqrSolution lqr;
  MatrixXd K;  // gain used for tightening and the terminal set
  setops::TighteningSequence sets;
  setops::Polytope terminal;
  std::vector<Matrix2d> a_pow;  // A^i, i = 0..N
  std::vector<MatrixXd> gamma;  // x_i = A^i x_0 + gamma_i u, 2 x N

  int horizon() const { return settings.horizon; }
};

OcpData make_ocp_data(const model::DiscreteModel& model, const OcpSettings& settings);

CostWeights make_weights(const OcpData& data, const Vector2d& x_ref, double lambda);

struct CovariancePropagation {
  std::vector<Matrix2d> state;   // Sigma^x_0..N, Sigma^x_0 = 0
  std::vector<double> residual;  // Sigma^d at x_hat_0..N
};

/// Sigma^x_{i+1} = A Sigma^x_i A' + Bg Sigma^d(x_hat_1,i) Bg', with the joint
/// state/GP covariance taken block diagonal. Inputs enter only through x_hat
/// because the nominal model is linear; `u_hat` is accepted for interface symmetry.
CovariancePropagation propagate_covariance(const model::DiscreteModel& model,
                                           const gp::GpModel& gp,
                                           const std::vector<Vector2d>& x_hat,
                                           const VectorXd& u_hat);

/// Shrinks every state bound by 2 sqrt(Sigma_jj + eps).
setops::BoxSet adaptive_tighten(const setops::BoxSet& X, const Matrix2d& cov, double eps = 1e-9);

enum class Formulation {
  Rmpc,            // nominal dynamics, robust sets, terminal set
  Passive,         // contingency + GP performance branch, cost (1-l) J_hat + l J_bar
  Active,          // Passive constraints, objective -sum Sigma^d, J_hat = J_B + Delta
  SingleBaseline,  // GP mean dynamics in the robust sets, cost J_hat
  SingleActive,    // SingleBaseline constraints with the learning objective
};

const char* to_string(Formulation f);

/// Budget for the learning formulations: J_hat = J_B + Delta, Delta <= each bound.
struct Budget {
  double J_B = 0.0;
  double bound_mean = 0.0;
  double bound_max = std::numeric_limits<double>::infinity();
};

/// Initial guess: performance and contingency input sequences (length N).
struct Guess {
  VectorXd u_hat;
  VectorXd u_bar;
};

/// The OCP as a smooth NLP in single-shooting form. Variable layout:
///   Rmpc                u_bar_0..N-1
///   Passive / Active    u_hat_0..N-1, u_bar_1..N-1, slacks (4 per stage 1..N), [Delta]
///   Single*             u_hat_0..N-1, [Delta]
/// u_bar_0 shares the variable of u_hat_0. Slack order per stage is
/// x1 lower, x1 upper, x2 lower, x2 upper.
class OcpProblem : public nlp::NlpProblem {
 public:
  OcpProblem(const OcpData& data, Formulation form, const CostWeights& weights,
             const gp::GpModel* gp, const Vector2d& x0, const Budget& budget = {});

  int num_variables() const override { return n_; }
  int num_equalities() const override { return m_eq_; }
  int num_inequalities() const override { return m_in_; }
  VectorXd lower_bounds() const override { return lower_; }
  VectorXd upper_bounds() const override { return upper_; }
  nlp::NlpEvaluation evaluate(const VectorXd& v, bool derivatives) const override;
  bool has_hessian() const override { return true; }
  /// Gauss-Newton of the tracking costs, the PSD part of the variance
  /// curvature, and |y| times the budget-equality Gauss-Newton term.
  MatrixXd hessian(const VectorXd& v, const VectorXd& y_eq, const VectorXd& y_in) const override;

  /// Packs a guess, filling slacks and Delta consistently.
  VectorXd initial_point(const Guess& guess) const;

  Formulation formulation() const { return form_; }
  bool has_performance() const;
  bool has_contingency() const;
  bool soft_performance() const;
  bool learning() const;

  VectorXd u_hat(const VectorXd& v) const;
  VectorXd u_bar(const VectorXd& v) const;
  int slack_offset() const { return slack_off_; }
  int num_slacks() const { return num_slack_; }
  int delta_index() const { return delta_idx_; }

  std::vector<Vector2d> contingency_states(const VectorXd& u_bar) const;
  struct PerformanceRollout {
    std::vector<Vector2d> x;             // x_hat_0..N
    std::vector<MatrixXd> dx;            // d x_hat_i / d u_hat, 2 x N
    std::vector<gp::GpSecondOrder> gp;   // GP query at x_hat_1,i, i = 0..N
    std::vector<Matrix2d> cov;           // Sigma^x_0..N
    std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> dcov;  // d(s11, s12, s22)/d u_hat
  };
  PerformanceRollout performance_rollout(const VectorXd& u_hat, bool derivatives) const;

 private:
  void add_cost_gradient(const std::vector<Vector2d>& x, const std::vector<MatrixXd>& dx,
                         const VectorXd& u, double scale, VectorXd& grad_u) const;
  MatrixXd cost_gauss_newton(const std::vector<MatrixXd>& dx) const;
  void scatter_bar(const VectorXd& g_bar, VectorXd& grad) const;
  int bar_index(int l) const;

  const OcpData& data_;
  Formulation form_;
  CostWeights w_;
  const gp::GpModel* gp_;
  Vector2d x0_;
  Budget budget_;
  int N_;
  int n_ = 0;
  int m_eq_ = 0;
  int m_in_ = 0;
  int slack_off_ = -1;
  int num_slack_ = 0;
  int delta_idx_ = -1;
  VectorXd lower_;
  VectorXd upper_;
  Eigen::Matrix3d cov_map_;  // (s11, s12, s22) -> A Sigma A'
  Eigen::Vector3d cov_in_;   // (s11, s12, s22) of Bg Bg'
};

struct OcpSolution {
  Formulation formulation = Formulation::Rmpc;
  nlp::SqpStatus status = nlp::SqpStatus::NumericalFailure;
  bool feasible = false;  // hard constraints hold to 1e-6
  std::vector<Vector2d> x_bar;
  VectorXd u_bar;
  std::vector<Vector2d> x_hat;
  VectorXd u_hat;
  std::vector<Matrix2d> state_cov;
  std::vector<double> gp_var;
  VectorXd slacks;
  double u_applied = 0.0;
  double J_hat = 0.0;  // performance branch tracking cost
  double J_bar = 0.0;  // contingency branch tracking cost
  double H = 0.0;      // -sum Sigma^d over the performance branch
  double Delta = 0.0;
  double objective = 0.0;
  double slack_sum = 0.0;
  double kkt = 0.0;
  double violation = 0.0;
  int iterations = 0;
  double solve_ms = 0.0;
  VectorXd variables;
  VectorXd y_eq;  // final multipliers, usable as a dual warm start
  VectorXd y_in;
};

/// Hover guess: every input at the nominal equilibrium of x_k.
Guess hover_guess(const OcpData& data, const Vector2d& x_k);
/// Shift by one stage, last stage duplicated.
Guess shift_guess(const OcpSolution& previous);

OcpSolution solve_ocp(const OcpData& data, Formulation form, const CostWeights& weights,
                      const gp::GpModel* gp, const Vector2d& x_k, const Guess& guess,
                      const nlp::SqpOptions& options, const Budget& budget = {});

OcpSolution solve_rmpc(const OcpData& data, const CostWeights& weights, const Vector2d& x_k,
                       const Guess& guess, const nlp::SqpOptions& options);
OcpSolution solve_passive(const OcpData& data, const CostWeights& weights, const gp::GpModel& gp,
                          const Vector2d& x_k, const Guess& guess, const nlp::SqpOptions& options);
/// Warm-started from `passive` (the baseline solve) with Delta = 0.
OcpSolution solve_active(const OcpData& data, const CostWeights& weights, const gp::GpModel& gp,
                         const Vector2d& x_k, const OcpSolution& passive, const Budget& budget,
                         const nlp::SqpOptions& options);
OcpSolution solve_single_baseline(const OcpData& data, const CostWeights& weights,
                                  const gp::GpModel& gp, const Vector2d& x_k, const Guess& guess,
                                  const nlp::SqpOptions& options);
OcpSolution solve_single_active(const OcpData& data, const CostWeights& weights,
                                const gp::GpModel& gp, const Vector2d& x_k,
                                const OcpSolution& baseline, const Budget& budget,
                                const nlp::SqpOptions& options);

/// J_B: the performance-branch cost of the baseline solution.
double baseline_cost(const OcpSolution& baseline);

struct LearningParams {
  double beta_bar = 1.0;
  double gamma_bar = 0.0;
  double beta_max = 0.0;
  double gamma_max = std::numeric_limits<double>::infinity();
};

/// Deterioration storage Y and the previous learning plan.
struct LearningLedger {
  LearningParams params;
  double Y = 0.0;
  bool has_previous = false;
  std::vector<Vector2d> prev_x_hat;
  VectorXd prev_u_hat;

  /// J+ = J(previous plan, current setpoint) - J_B; zero before the first plan.
  double j_plus(const CostWeights& weights, double J_B) const;
  Budget budget(double J_B, double j_plus) const;
};

/// Y' = Y + beta_bar max(J+, 0) + gamma_bar - Delta.
LearningLedger update_ledger(const LearningLedger& ledger, double j_plus, double delta);

/// Stores the accepted plan for the next J+ evaluation.
void record_plan(LearningLedger& ledger, const OcpSolution& solution);

}  // namespace dualmpc::ocp
