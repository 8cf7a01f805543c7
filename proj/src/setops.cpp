#include "dualmpc/setops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "dualmpc/error.hpp"

namespace dualmpc::setops {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, msg);
}

}  // namespace

BoxSet::BoxSet(VectorXd lo, VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
  require(lower.size() == upper.size() && lower.size() >= 1,
          "BoxSet: bounds must share a dimension >= 1");
}

bool BoxSet::empty() const { return (lower.array() > upper.array()).any(); }

bool BoxSet::contains(const VectorXd& x, double tol) const {
  require(x.size() == lower.size(), "BoxSet::contains: dimension mismatch");
  return ((x.array() >= lower.array() - tol) && (x.array() <= upper.array() + tol)).all();
}

bool BoxSet::subset_of(const BoxSet& other, double tol) const {
  require(other.dim() == dim(), "BoxSet::subset_of: dimension mismatch");
  return ((lower.array() >= other.lower.array() - tol) &&
          (upper.array() <= other.upper.array() + tol))
      .all();
}

Zonotope::Zonotope(VectorXd c, const MatrixXd& g) : center(std::move(c)) {
  require(g.cols() == 0 || g.rows() == center.size(),
          "Zonotope: generators must share the center's dimension");
  std::vector<int> keep;
  for (int j = 0; j < g.cols(); ++j) {
    if (g.col(j).lpNorm<Eigen::Infinity>() > 0.0) keep.push_back(j);
  }
  generators.resize(center.size(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) generators.col(j) = g.col(keep[j]);
}

Zonotope Zonotope::point(const VectorXd& c) { return Zonotope(c, MatrixXd(c.size(), 0)); }

Zonotope Zonotope::from_box(const BoxSet& box) {
  require(!box.empty(), "Zonotope::from_box: empty box");
  VectorXd c = 0.5 * (box.lower + box.upper);
  MatrixXd g = (0.5 * (box.upper - box.lower)).asDiagonal();
  return Zonotope(c, g);
}

Zonotope Zonotope::linear_map(const MatrixXd& m) const {
  require(m.cols() == center.size(), "Zonotope::linear_map: dimension mismatch");
  return Zonotope(m * center, m * generators);
}

Zonotope Zonotope::minkowski_sum(const Zonotope& other) const {
  require(other.dim() == dim(), "Zonotope::minkowski_sum: dimension mismatch");
  MatrixXd g(dim(), order() + other.order());
  g << generators, other.generators;
  return Zonotope(center + other.center, g);
}

double zonotope_support(const Zonotope& z, const VectorXd& v) {
  require(v.size() == z.center.size(), "zonotope_support: dimension mismatch");
  double s = v.dot(z.center);
  if (z.order() > 0) s += (v.transpose() * z.generators).cwiseAbs().sum();
  return s;
}

BoxSet pontryagin_difference(const BoxSet& box, const Zonotope& z) {
  require(box.dim() == z.dim(), "pontryagin_difference: dimension mismatch");
  BoxSet out = box;
  for (int j = 0; j < box.dim(); ++j) {
    VectorXd e = VectorXd::Unit(box.dim(), j);
    out.upper[j] = box.upper[j] - zonotope_support(z, e);
    out.lower[j] = box.lower[j] + zonotope_support(z, -e);
  }
  return out;
}

bool Polytope::contains(const VectorXd& x, double tol) const {
  require(x.size() == normals.cols(), "Polytope::contains: dimension mismatch");
  return ((normals * x - offsets).array() <= tol).all();
}

Polytope box_polytope(const BoxSet& box) {
  const int n = box.dim();
  Polytope p;
  p.normals.resize(2 * n, n);
  p.normals << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  p.offsets.resize(2 * n);
  p.offsets << box.upper, -box.lower;
  return p;
}

// ---------------------------------------------------------------------------
// Dense two-phase simplex on  H (x+ - x-) + s = h,  x+, x-, s >= 0.

namespace {

class Tableau {
 public:
  Tableau(int rows, int cols) : t_(MatrixXd::Zero(rows + 1, cols + 1)), basis_(rows, -1) {}

  int rows() const { return static_cast<int>(basis_.size()); }
  int cols() const { return static_cast<int>(t_.cols()) - 1; }
  double& at(int r, int c) { return t_(r, c); }
  double rhs(int r) const { return t_(r, cols()); }
  double& rhs(int r) { return t_(r, cols()); }
  // Reduced-cost row r_j = c_j - c_B B^-1 A_j; stored in the last row.
  auto cost_row() { return t_.row(rows()); }
  std::vector<int>& basis() { return basis_; }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (int i = 0; i <= rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[r] = c;
  }

  void set_costs(const VectorXd& c) {
    t_.row(rows()).setZero();
    t_.row(rows()).head(c.size()) = c.transpose();
    for (int i = 0; i < rows(); ++i) {
      const double cb = basis_[i] < c.size() ? c[basis_[i]] : 0.0;
      if (cb != 0.0) t_.row(rows()) -= cb * t_.row(i);
    }
  }

  // Maximizes over columns [0, allowed). Returns false when unbounded.
  bool optimize(int allowed, double tol) {
    for (int iter = 0; iter < 50 * (rows() + cols()) + 100; ++iter) {
      int enter = -1;
      for (int j = 0; j < allowed; ++j) {
        if (t_(rows(), j) > tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = kInf;
      for (int i = 0; i < rows(); ++i) {
        if (t_(i, enter) > tol) {
          const double ratio = rhs(i) / t_(i, enter);
          if (ratio < best - 1e-14 ||
              (std::abs(ratio - best) <= 1e-14 && leave >= 0 && basis_[i] < basis_[leave])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    throw Error(ErrorKind::NumericalFailure, "simplex: iteration limit reached");
  }

  // Objective value of the current basis for cost vector c.
  double value(const VectorXd& c) const {
    double v = 0.0;
    for (std::size_t i = 0; i < basis_.size(); ++i) {
      if (basis_[i] < c.size()) v += c[basis_[i]] * t_(static_cast<int>(i), t_.cols() - 1);
    }
    return v;
  }

 private:
  MatrixXd t_;
  std::vector<int> basis_;
};

}  // namespace

LpResult maximize_linear(const VectorXd& c, const Polytope& p) {
  require(c.size() == p.dim(), "maximize_linear: dimension mismatch");
  const int n = p.dim();
  const int m = p.num_faces();
  const double scale = std::max(1.0, p.offsets.cwiseAbs().maxCoeff());
  const double tol = 1e-11 * scale;

  std::vector<int> art_rows;
  for (int i = 0; i < m; ++i) {
    if (p.offsets[i] < 0.0) art_rows.push_back(i);
  }
  const int n_struct = 2 * n + m;
  const int n_art = static_cast<int>(art_rows.size());
  Tableau t(m, n_struct + n_art);

  int a = 0;
  for (int i = 0; i < m; ++i) {
    const double sign = p.offsets[i] < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j) {
      t.at(i, j) = sign * p.normals(i, j);
      t.at(i, n + j) = -sign * p.normals(i, j);
    }
    t.at(i, 2 * n + i) = sign;
    t.rhs(i) = sign * p.offsets[i];
    if (sign < 0.0) {
      t.at(i, n_struct + a) = 1.0;
      t.basis()[i] = n_struct + a;
      ++a;
    } else {
      t.basis()[i] = 2 * n + i;
    }
  }

  LpResult result;
  if (n_art > 0) {
    VectorXd phase1 = VectorXd::Zero(n_struct + n_art);
    phase1.tail(n_art).setConstant(-1.0);
    t.set_costs(phase1);
    t.optimize(n_struct + n_art, tol);
    if (t.value(phase1) < -1e-9 * scale) {
      result.status = LpResult::Status::Infeasible;
      return result;
    }
    // Drive remaining (zero-valued) artificials out of the basis.
    for (int i = 0; i < m; ++i) {
      if (t.basis()[i] < n_struct) continue;
      for (int j = 0; j < n_struct; ++j) {
        if (std::abs(t.at(i, j)) > 1e-9) {
          t.pivot(i, j);
          break;
        }
      }
    }
  }

  VectorXd phase2 = VectorXd::Zero(n_struct + n_art);
  phase2.head(n) = c;
  phase2.segment(n, n) = -c;
  t.set_costs(phase2);
  if (!t.optimize(n_struct, tol)) {
    result.status = LpResult::Status::Unbounded;
    result.value = kInf;
    return result;
  }
  VectorXd z = VectorXd::Zero(n_struct + n_art);
  for (int i = 0; i < m; ++i) z[t.basis()[i]] = t.rhs(i);
  result.x = z.head(n) - z.segment(n, n);
  result.value = c.dot(result.x);
  result.status = LpResult::Status::Optimal;
  return result;
}

bool is_empty(const Polytope& p) {
  return maximize_linear(VectorXd::Zero(p.dim()), p).status == LpResult::Status::Infeasible;
}

Polytope remove_redundant(const Polytope& p, double tol) {
  const int n = p.dim();
  std::vector<VectorXd> rows;
  std::vector<double> offs;
  for (int i = 0; i < p.num_faces(); ++i) {
    const double nrm = p.normals.row(i).norm();
    if (nrm == 0.0) {
      if (p.offsets[i] < 0.0) {
        // 0 <= negative: the whole set is empty; keep an explicit witness.
        rows.emplace_back(VectorXd::Zero(n));
        offs.push_back(-1.0);
      }
      continue;
    }
    VectorXd a = p.normals.row(i).transpose() / nrm;
    const double b = p.offsets[i] / nrm;
    bool dup = false;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if ((rows[k] - a).lpNorm<Eigen::Infinity>() < 1e-12) {
        offs[k] = std::min(offs[k], b);
        dup = true;
        break;
      }
    }
    if (!dup) {
      rows.push_back(a);
      offs.push_back(b);
    }
  }

  std::vector<bool> keep(rows.size(), true);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Polytope others;
    int count = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (k != r && keep[k]) ++count;
    }
    others.normals.resize(count, n);
    others.offsets.resize(count);
    int idx = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (k == r || !keep[k]) continue;
      others.normals.row(idx) = rows[k].transpose();
      others.offsets[idx] = offs[k];
      ++idx;
    }
    if (count == 0) continue;
    const LpResult lp = maximize_linear(rows[r], others);
    if (lp.status == LpResult::Status::Infeasible) break;  // empty set: leave as is
    if (lp.status == LpResult::Status::Optimal && lp.value <= offs[r] + tol) keep[r] = false;
  }

  Polytope out;
  const auto kept = std::count(keep.begin(), keep.end(), true);
  out.normals.resize(kept, n);
  out.offsets.resize(kept);
  int idx = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!keep[r]) continue;
    out.normals.row(idx) = rows[r].transpose();
    out.offsets[idx] = offs[r];
    ++idx;
  }
  return out;
}

// ---------------------------------------------------------------------------

double dare_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, const MatrixXd& P) {
  const MatrixXd S = R + B.transpose() * P * B;
  const MatrixXd BtPA = B.transpose() * P * A;
  const MatrixXd res =
      A.transpose() * P * A - P - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
  return res.cwiseAbs().maxCoeff();
}

LqrSolution solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                       const MatrixXd& R) {
  const auto n = A.rows();
  require(A.cols() == n && B.rows() == n && Q.rows() == n && Q.cols() == n &&
              R.rows() == B.cols() && R.cols() == B.cols(),
          "solve_dare: inconsistent dimensions");
  Eigen::LLT<MatrixXd> r_llt(0.5 * (R + R.transpose()));
  if (r_llt.info() != Eigen::Success) {
    throw Error(ErrorKind::InvalidArgument, "solve_dare: R must be positive definite");
  }

  constexpr int kMaxIterations = 10000;
  constexpr double kStepTol = 1e-12;
  MatrixXd P = Q;
  int it = 0;
  for (; it < kMaxIterations; ++it) {
    const MatrixXd S = R + B.transpose() * P * B;
    const MatrixXd BtPA = B.transpose() * P * A;
    MatrixXd next = Q + A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double step = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (step <= kStepTol * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
  }
  if (it >= kMaxIterations || !P.allFinite()) {
    throw Error(ErrorKind::NumericalFailure, "solve_dare: Riccati iteration did not converge");
  }

  LqrSolution sol;
  sol.P = P;
  sol.K = -(R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
  sol.iterations = it + 1;
  if (dare_residual(A, B, Q, R, P) > 1e-8 * std::max(1.0, P.cwiseAbs().maxCoeff())) {
    throw Error(ErrorKind::NumericalFailure, "solve_dare: residual above tolerance");
  }
  return sol;
}

double spectral_radius(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------

TighteningSequence tighten_sequences(const MatrixXd& A, const MatrixXd& B,
                                     const MatrixXd& K, const BoxSet& X,
                                     const BoxSet& U, const BoxSet& W,
                                     int horizon) {
  require(horizon >= 1, "tighten_sequences: horizon must be >= 1");
  require(W.contains(VectorXd::Zero(W.dim())), "tighten_sequences: W must contain the origin");
  const MatrixXd Ak = A + B * K;
  require(spectral_radius(Ak) < 1.0, "tighten_sequences: A+BK must be Schur stable");

  TighteningSequence seq;
  const Zonotope w = Zonotope::from_box(W);
  Zonotope reach = Zonotope::point(VectorXd::Zero(A.rows()));
  Zonotope propagated = w;  // (A+BK)^i W
  for (int i = 0; i <= horizon; ++i) {
    BoxSet xi = pontryagin_difference(X, reach);
    if (xi.empty()) {
      throw Error(ErrorKind::InfeasibleTightening,
                  "tighten_sequences: tightened state set empty at stage " + std::to_string(i));
    }
    seq.state.push_back(xi);
    if (i < horizon) {
      BoxSet ui = pontryagin_difference(U, reach.linear_map(K));
      if (ui.empty()) {
        throw Error(ErrorKind::InfeasibleTightening,
                    "tighten_sequences: tightened input set empty at stage " + std::to_string(i));
      }
      seq.input.push_back(ui);
    }
    seq.reach.push_back(reach);
    reach = reach.minkowski_sum(propagated);
    if (i < horizon) propagated = propagated.linear_map(Ak);
  }
  seq.terminal_disturbance = propagated;
  return seq;
}

Polytope compute_rci(const MatrixXd& A, const MatrixXd& B, const MatrixXd& K,
                     const BoxSet& state_set, const BoxSet& input_set,
                     const Zonotope& disturbance, int max_iterations) {
  require(!state_set.empty() && !input_set.empty(), "compute_rci: empty constraint set");
  const MatrixXd Ak = A + B * K;
  require(spectral_radius(Ak) < 1.0, "compute_rci: A+BK must be Schur stable");
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(K.rows());

  Polytope omega;
  omega.normals.resize(2 * n + 2 * m, n);
  omega.normals << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n), K, -K;
  omega.offsets.resize(2 * n + 2 * m);
  omega.offsets << state_set.upper, -state_set.lower, input_set.upper, -input_set.lower;
  omega = remove_redundant(omega);

  constexpr double kFaceTol = 1e-9;
  for (int it = 0; it < max_iterations; ++it) {
    if (is_empty(omega)) {
      throw Error(ErrorKind::NoRciExists, "compute_rci: invariant set is empty");
    }
    Polytope pre;
    pre.normals = omega.normals * Ak;
    pre.offsets.resize(omega.num_faces());
    for (int r = 0; r < omega.num_faces(); ++r) {
      pre.offsets[r] = omega.offsets[r] - zonotope_support(disturbance, omega.normals.row(r).transpose());
    }
    bool converged = true;
    for (int r = 0; r < pre.num_faces(); ++r) {
      const LpResult lp = maximize_linear(pre.normals.row(r).transpose(), omega);
      if (lp.status != LpResult::Status::Optimal || lp.value > pre.offsets[r] + kFaceTol) {
        converged = false;
        break;
      }
    }
    if (converged) return omega;
    Polytope next;
    next.normals.resize(omega.num_faces() + pre.num_faces(), n);
    next.normals << omega.normals, pre.normals;
    next.offsets.resize(omega.num_faces() + pre.num_faces());
    next.offsets << omega.offsets, pre.offsets;
    omega = remove_redundant(next);
  }
  throw Error(ErrorKind::NumericalFailure, "compute_rci: iteration cap reached");
}

}  // namespace dualmpc::setops
