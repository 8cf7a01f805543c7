#pragma once

#include <Eigen/Dense>

#include <vector>

namespace dualmpc::setops {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned box {x : lower <= x <= upper}. Boxes with lower > upper in
/// some coordinate are representable and report empty().
struct BoxSet {
  VectorXd lower;
  VectorXd upper;

  BoxSet() = default;
  BoxSet(VectorXd lo, VectorXd hi);

  int dim() const { return static_cast<int>(lower.size()); }
  bool empty() const;
  bool contains(const VectorXd& x, double tol = 0.0) const;
  /// True when every coordinate range of `this` lies inside `other`.
  bool subset_of(const BoxSet& other, double tol = 0.0) const;
};

/// Zonotope {c + G xi : |xi|_inf <= 1}; generators are the columns of G.
struct Zonotope {
  VectorXd center;
  MatrixXd generators;

  Zonotope() = default;
  /// Zero-length generators are dropped on construction.
  Zonotope(VectorXd c, const MatrixXd& g);

  static Zonotope point(const VectorXd& c);
  static Zonotope from_box(const BoxSet& box);

  int dim() const { return static_cast<int>(center.size()); }
  int order() const { return static_cast<int>(generators.cols()); }

  Zonotope linear_map(const MatrixXd& m) const;
  Zonotope minkowski_sum(const Zonotope& other) const;
};

/// max_{x in Z} v.x = v.c + sum_g |v.g|.
double zonotope_support(const Zonotope& z, const VectorXd& v);

/// Box minus zonotope (Pontryagin difference), face by face.
BoxSet pontryagin_difference(const BoxSet& box, const Zonotope& z);

/// Halfspace polytope {x : normals * x <= offsets}.
struct Polytope {
  MatrixXd normals;
  VectorXd offsets;

  int dim() const { return static_cast<int>(normals.cols()); }
  int num_faces() const { return static_cast<int>(normals.rows()); }
  bool contains(const VectorXd& x, double tol = 0.0) const;
};

Polytope box_polytope(const BoxSet& box);

struct LpResult {
  enum class Status { Optimal, Infeasible, Unbounded };
  Status status = Status::Infeasible;
  VectorXd x;
  double value = 0.0;
};

/// Maximizes c.x over a polytope with a dense two-phase simplex (Bland's rule).
/// Intended for the low-dimensional sets handled here.
LpResult maximize_linear(const VectorXd& c, const Polytope& p);

bool is_empty(const Polytope& p);

/// Normalizes faces to unit normals and drops faces that do not cut the set.
Polytope remove_redundant(const Polytope& p, double tol = 1e-9);

struct LqrSolution {
  MatrixXd P;
  MatrixXd K;  // closed loop is A + B K
  int iterations = 0;
};

/// Discrete algebraic Riccati equation by fixed-point (value) iteration.
LqrSolution solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                       const MatrixXd& R);

/// Max-abs entry of A'PA - P - A'PB (R + B'PB)^-1 B'PA + Q.
double dare_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, const MatrixXd& P);

double spectral_radius(const MatrixXd& m);

struct TighteningSequence {
  std::vector<BoxSet> state;     // X_0 .. X_N
  std::vector<BoxSet> input;     // U_0 .. U_{N-1}
  std::vector<Zonotope> reach;   // R_0 .. R_N, R_0 = {0}
  Zonotope terminal_disturbance; // (A+BK)^N W, drives the terminal-set recursion
};

/// X_i = X - R_i, U_i = U - K R_i with R_i = sum_{j<i} (A+BK)^j W.
/// Throws InfeasibleTightening when some X_i is empty.
TighteningSequence tighten_sequences(const MatrixXd& A, const MatrixXd& B,
                                     const MatrixXd& K, const BoxSet& X,
                                     const BoxSet& U, const BoxSet& W,
                                     int horizon);

/// Robust positively invariant set of x+ = (A+BK)x + w, w in W, inside
/// {x in X_N : Kx in U}. Iterates Omega <- Omega n Pre(Omega) until no face
/// moves by more than 1e-9.
Polytope compute_rci(const MatrixXd& A, const MatrixXd& B, const MatrixXd& K,
                     const BoxSet& state_set, const BoxSet& input_set,
                     const Zonotope& disturbance, int max_iterations = 100);

}  // namespace dualmpc::setops
