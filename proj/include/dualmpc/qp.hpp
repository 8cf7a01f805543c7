#pragma once

#include <Eigen/Dense>

#include <vector>

namespace dualmpc::nlp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x >= b_in,  lower <= x <= upper.
/// Infinite bounds are ignored.
struct QpProblem {
  MatrixXd H;
  VectorXd g;
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_in;
  VectorXd b_in;
  VectorXd lower;
  VectorXd upper;

  int num_variables() const { return static_cast<int>(g.size()); }
};

enum class QpStatus { Optimal, Infeasible, NumericalFailure };

const char* to_string(QpStatus s);

/// Multipliers satisfy  H x + g = A_eq' y_eq + A_in' y_in + y_bound,
/// with y_in >= 0 and y_bound > 0 at active lower bounds, < 0 at upper bounds.
struct QpSolution {
  QpStatus status = QpStatus::NumericalFailure;
  VectorXd x;
  VectorXd y_eq;
  VectorXd y_in;
  VectorXd y_bound;
  double objective = 0.0;
  int iterations = 0;
  bool elastic = false;          // inconsistent constraints were relaxed
  double elastic_violation = 0;  // l1 norm of the relaxation at the solution
  /// Active inequalities: general rows 0..m-1, then finite bounds in variable
  /// order (lower before upper) numbered from m.
  std::vector<int> active_set;
};

struct QpOptions {
  double elastic_penalty = 1e6;
  /// Smallest eigenvalue enforced on H (relative to max(1, |H|_inf)).
  double min_curvature = 1e-10;
  int max_iterations = 0;  // 0 = automatic
  /// Inequalities (indexed as QpSolution::active_set) tried before the most
  /// violated one while they are violated; a good guess saves drop steps.
  std::vector<int> active_hint;
};

/// Goldfarb-Idnani dual active-set method. An indefinite or singular H is
/// shifted by a multiple of the identity first. When the constraints are
/// inconsistent the problem is re-solved with l1 elastic slacks and the
/// solution is flagged `elastic` with status Infeasible.
QpSolution solve_qp(const QpProblem& qp, const QpOptions& options = {});

/// Max-norm KKT residual (stationarity, primal feasibility, dual sign and
/// complementarity) of a candidate QP solution.
double qp_kkt_residual(const QpProblem& qp, const QpSolution& sol);

}  // namespace dualmpc::nlp
