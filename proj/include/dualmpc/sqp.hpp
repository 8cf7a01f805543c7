#pragma once

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dualmpc/qp.hpp"

namespace dualmpc::nlp {

/// Values and first derivatives of an NLP at one point.
/// Equalities are c_eq(x) = 0, inequalities c_in(x) >= 0.
struct NlpEvaluation {
  double objective = 0.0;
  VectorXd gradient;
  VectorXd c_eq;
  MatrixXd jac_eq;
  VectorXd c_in;
  MatrixXd jac_in;
};

/// min f(x)  s.t.  c_eq(x) = 0,  c_in(x) >= 0,  lower <= x <= upper.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_variables() const = 0;
  virtual int num_equalities() const { return 0; }
  virtual int num_inequalities() const { return 0; }
  virtual VectorXd lower_bounds() const;
  virtual VectorXd upper_bounds() const;

  /// Derivative fields may be left empty when `derivatives` is false.
  virtual NlpEvaluation evaluate(const VectorXd& x, bool derivatives) const = 0;

  /// Optional Hessian (or a positive semidefinite approximation) of the
  /// Lagrangian f - y_eq' c_eq - y_in' c_in.
  virtual bool has_hessian() const { return false; }
  virtual MatrixXd hessian(const VectorXd& x, const VectorXd& y_eq, const VectorXd& y_in) const;
};

/// NlpProblem assembled from callbacks; handy for small problems and tests.
class FunctionNlp : public NlpProblem {
 public:
  using Objective = std::function<double(const VectorXd&, VectorXd* grad)>;
  using Constraints = std::function<void(const VectorXd&, VectorXd& c, MatrixXd* jac)>;
  using Hessian = std::function<MatrixXd(const VectorXd&, const VectorXd&, const VectorXd&)>;

  FunctionNlp(int n, Objective objective) : n_(n), objective_(std::move(objective)) {}

  FunctionNlp& equalities(int m, Constraints c);
  FunctionNlp& inequalities(int m, Constraints c);
  FunctionNlp& bounds(VectorXd lower, VectorXd upper);
  FunctionNlp& hessian_callback(Hessian h);

  int num_variables() const override { return n_; }
  int num_equalities() const override { return m_eq_; }
  int num_inequalities() const override { return m_in_; }
  VectorXd lower_bounds() const override;
  VectorXd upper_bounds() const override;
  NlpEvaluation evaluate(const VectorXd& x, bool derivatives) const override;
  bool has_hessian() const override { return static_cast<bool>(hessian_); }
  MatrixXd hessian(const VectorXd& x, const VectorXd& y_eq, const VectorXd& y_in) const override;

 private:
  int n_;
  Objective objective_;
  int m_eq_ = 0;
  Constraints eq_;
  int m_in_ = 0;
  Constraints in_;
  VectorXd lower_;
  VectorXd upper_;
  Hessian hessian_;
};

enum class SqpStatus { Optimal, MaxIterations, Infeasible, NumericalFailure };

const char* to_string(SqpStatus s);

enum class HessianMode {
  Exact,  // use NlpProblem::hessian when available, else BFGS
  Bfgs,   // always damped BFGS
};

struct SqpOptions {
  int max_iterations = 200;
  double kkt_tolerance = 1e-6;         // scaled stationarity and complementarity
  double constraint_tolerance = 1e-8;  // max-norm violation
  HessianMode hessian = HessianMode::Exact;
  double armijo = 1e-4;
  double min_step = 1e-10;
  /// Exact-Hessian mode adds tau*I to the model Hessian, raising tau after
  /// short line-search steps and lowering it after full ones.
  bool adaptive_damping = true;
  double damping_initial = 1e-3;
  QpOptions qp;
  std::ostream* trace = nullptr;  // one line per iteration when set
  /// Multiplier warm start for the first Hessian evaluation (ignored unless
  /// the sizes match the problem).
  VectorXd initial_y_eq;
  VectorXd initial_y_in;
};

struct SqpIterate {
  int iteration = 0;
  double objective = 0.0;
  double violation = 0.0;
  double kkt = 0.0;
  double step = 0.0;
  double penalty = 0.0;
  double merit = 0.0;       // l1 merit at the iterate
  double merit_next = 0.0;  // l1 merit (same penalty) at the accepted point
  bool elastic = false;
};

struct SqpResult {
  SqpStatus status = SqpStatus::NumericalFailure;
  VectorXd x;
  VectorXd y_eq;
  VectorXd y_in;
  VectorXd y_bound;
  double objective = 0.0;
  double violation = 0.0;  // max-norm constraint violation at x
  double kkt = 0.0;        // scaled KKT residual at x
  int iterations = 0;
  double wall_ms = 0.0;
  std::vector<SqpIterate> history;
};

/// Line-search SQP on the l1 exact penalty merit function. At the iteration
/// cap the best feasible iterate is returned if the last one is worse or infeasible.
SqpResult solve_sqp(const NlpProblem& problem, const VectorXd& x0, const SqpOptions& options = {});

/// Max-norm violation of the constraints and bounds.
double constraint_violation(const NlpProblem& problem, const VectorXd& x,
                            const NlpEvaluation& ev);

struct DerivativeMismatch {
  std::string block;  // "objective", "equality" or "inequality"
  int row = 0;
  int col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

/// Central finite-difference check of the gradient and constraint Jacobians.
/// Entries whose error |a - fd| / max(1, |a|, |fd|) exceeds `tolerance` are reported.
std::vector<DerivativeMismatch> check_derivatives(const NlpProblem& problem, const VectorXd& x,
                                                  double tolerance = 1e-5);

}  // namespace dualmpc::nlp
