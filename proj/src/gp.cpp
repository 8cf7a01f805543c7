#include "dualmpc/gp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dualmpc/error.hpp"

namespace dualmpc::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void GpHyper::validate() const {
  if (!(sigma_f2 > 0.0 && length_scale > 0.0 && sigma_v2 >= 0.0 && jitter > 0.0)) {
    throw Error(ErrorKind::InvalidArgument,
                "GpHyper: need sigma_f2 > 0, length_scale > 0, sigma_v2 >= 0, jitter > 0");
  }
}

double kernel(const GpHyper& h, double z, double z_prime) {
  const double d = z - z_prime;
  return h.sigma_f2 * std::exp(-d * d / (2.0 * h.length_scale * h.length_scale));
}

bool GpDataset::add(int step, double z, double y, double dedup_tol) {
  for (double existing : inputs) {
    if (std::abs(existing - z) <= dedup_tol) return false;
  }
  steps.push_back(step);
  inputs.push_back(z);
  targets.push_back(y);
  return true;
}

void GpDataset::enforce_cap(std::size_t max_points) {
  if (max_points == 0 || size() <= max_points) return;
  const auto drop = static_cast<std::ptrdiff_t>(size() - max_points);
  steps.erase(steps.begin(), steps.begin() + drop);
  inputs.erase(inputs.begin(), inputs.begin() + drop);
  targets.erase(targets.begin(), targets.begin() + drop);
}

void write_dataset_csv(std::ostream& os, const GpDataset& data) {
  os << "k,z,y\n";
  os.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.steps[i] << ',' << data.inputs[i] << ',' << data.targets[i] << '\n';
  }
}

GpDataset read_dataset_csv(std::istream& is) {
  GpDataset data;
  std::string line;
  if (!std::getline(is, line) || line.rfind("k,z,y", 0) != 0) {
    throw Error(ErrorKind::IoError, "dataset csv: expected header 'k,z,y'");
  }
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string k, z, y;
    if (!std::getline(ss, k, ',') || !std::getline(ss, z, ',') || !std::getline(ss, y)) {
      throw Error(ErrorKind::IoError, "dataset csv: malformed line " + std::to_string(lineno));
    }
    try {
      data.steps.push_back(std::stoi(k));
      data.inputs.push_back(std::stod(z));
      data.targets.push_back(std::stod(y));
    } catch (const std::exception&) {
      throw Error(ErrorKind::IoError, "dataset csv: bad number on line " + std::to_string(lineno));
    }
  }
  return data;
}

// ---------------------------------------------------------------------------

namespace {

MatrixXd gram(const GpHyper& h, std::span<const double> a, std::span<const double> b) {
  MatrixXd k(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) k(i, j) = kernel(h, a[i], b[j]);
  }
  return k;
}

MatrixXd cholesky_or_throw(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalFailure, std::string("GP fit: ") + what +
                                                 " is not positive definite (check jitter)");
  }
  return llt.matrixL();
}

struct KernelColumns {
  VectorXd k, dk, d2k;
};

KernelColumns kernel_columns(const GpHyper& h, const std::vector<double>& basis, double z) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  KernelColumns c{VectorXd(n), VectorXd(n), VectorXd(n)};
  const double l2 = h.length_scale * h.length_scale;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = z - basis[i];
    const double k = kernel(h, z, basis[i]);
    c.k[i] = k;
    c.dk[i] = -d / l2 * k;
    c.d2k[i] = (d * d / (l2 * l2) - 1.0 / l2) * k;
  }
  return c;
}

}  // namespace

GpModel::GpModel(const GpHyper& hyper) : hyper_(hyper) { hyper_.validate(); }

GpModel GpModel::fit(const GpDataset& data, const GpHyper& hyper, GpMode mode,
                     std::span<const double> inducing) {
  hyper.validate();
  if (data.inputs.size() != data.targets.size()) {
    throw Error(ErrorKind::InvalidArgument, "GP fit: inputs and targets differ in length");
  }
  GpModel model(hyper);
  model.mode_ = mode;
  model.num_data_ = data.size();
  if (data.empty()) return model;

  const VectorXd y = Eigen::Map<const VectorXd>(data.targets.data(),
                                                static_cast<Eigen::Index>(data.size()));
  if (mode == GpMode::Exact) {
    model.basis_ = data.inputs;
    const auto n = static_cast<Eigen::Index>(data.size());
    const MatrixXd k = gram(hyper, data.inputs, data.inputs) +
                       (hyper.sigma_v2 + hyper.jitter) * MatrixXd::Identity(n, n);
    model.chol_ = cholesky_or_throw(k, "Gram matrix");
    const MatrixXd& chol = model.chol_;
    const auto L = chol.triangularView<Eigen::Lower>();
    model.alpha_ = L.transpose().solve(L.solve(y));
    return model;
  }

  if (inducing.empty()) {
    throw Error(ErrorKind::InvalidArgument, "GP fit: sparse mode needs at least one inducing input");
  }
  model.basis_.assign(inducing.begin(), inducing.end());
  const auto m = static_cast<Eigen::Index>(inducing.size());
  const MatrixXd kmm = gram(hyper, inducing, inducing) + hyper.jitter * MatrixXd::Identity(m, m);
  model.chol_ = cholesky_or_throw(kmm, "inducing Gram matrix");
  const MatrixXd& chol = model.chol_;
  const auto L = chol.triangularView<Eigen::Lower>();
  const MatrixXd v = L.solve(gram(hyper, inducing, data.inputs));  // L^-1 K_mn
  // FITC diagonal correction diag(K_nn - Q_nn) plus noise.
  VectorXd lambda(static_cast<Eigen::Index>(data.size()));
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double qnn = v.col(i).squaredNorm();
    lambda[i] = std::max(hyper.sigma_f2 - qnn, 0.0) + hyper.sigma_v2 + hyper.jitter;
  }
  const VectorXd lambda_inv = lambda.cwiseInverse();
  const MatrixXd a = MatrixXd::Identity(m, m) + v * lambda_inv.asDiagonal() * v.transpose();
  Eigen::LLT<MatrixXd> a_llt(a);
  if (a_llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalFailure, "GP fit: FITC posterior matrix not positive definite");
  }
  model.fitc_inv_ = a_llt.solve(MatrixXd::Identity(m, m));
  const VectorXd rhs = v * lambda_inv.cwiseProduct(y);
  model.alpha_ = L.transpose().solve(VectorXd(a_llt.solve(rhs)));
  return model;
}

GpPrediction GpModel::predict(double z) const {
  const GpSecondOrder s = predict_second_order(z);
  return {s.mean, s.variance};
}

GpPredictionGrad GpModel::predict_grad(double z) const {
  const GpSecondOrder s = predict_second_order(z);
  return {s.mean, s.variance, s.dmean, s.dvariance};
}

GpSecondOrder GpModel::predict_second_order(double z) const {
  GpSecondOrder out;
  out.variance = hyper_.sigma_f2;
  if (basis_.empty()) return out;

  const KernelColumns c = kernel_columns(hyper_, basis_, z);
  out.mean = c.k.dot(alpha_);
  out.dmean = c.dk.dot(alpha_);
  out.d2mean = c.d2k.dot(alpha_);

  const auto L = chol_.triangularView<Eigen::Lower>();
  const VectorXd w = L.solve(c.k);
  const VectorXd dw = L.solve(c.dk);
  const VectorXd d2w = L.solve(c.d2k);
  double quad = w.squaredNorm();
  double dquad = 2.0 * w.dot(dw);
  double d2quad = 2.0 * (dw.squaredNorm() + w.dot(d2w));
  if (mode_ == GpMode::Sparse) {
    const VectorXd aw = fitc_inv_ * w;
    const VectorXd adw = fitc_inv_ * dw;
    quad -= w.dot(aw);
    dquad -= 2.0 * dw.dot(aw);
    d2quad -= 2.0 * (dw.dot(adw) + d2w.dot(aw));
  }
  out.variance = std::max(hyper_.sigma_f2 - quad, 0.0);
  out.dvariance = -dquad;
  out.d2variance = -d2quad;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> select_inducing(std::span<const double> trajectory, int count,
                                    double length_scale) {
  if (count < 1 || trajectory.empty()) {
    throw Error(ErrorKind::InvalidArgument, "select_inducing: need count >= 1 and a trajectory");
  }
  auto [lo_it, hi_it] = std::minmax_element(trajectory.begin(), trajectory.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi - lo < 1e-6) {
    const double mid = 0.5 * (lo + hi);
    lo = mid - 0.5 * length_scale;
    hi = mid + 0.5 * length_scale;
  }
  std::vector<double> out;
  if (count == 1) {
    out.push_back(0.5 * (lo + hi));
    return out;
  }
  for (int i = 0; i < count; ++i) out.push_back(lo + (hi - lo) * i / (count - 1));
  return out;
}

std::vector<double> select_inducing_by_time(std::span<const double> trajectory, int count) {
  if (count < 1 || trajectory.empty()) {
    throw Error(ErrorKind::InvalidArgument,
                "select_inducing_by_time: need count >= 1 and a trajectory");
  }
  const auto last = static_cast<double>(trajectory.size() - 1);
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const double pos = count == 1 ? 0.5 * last : last * i / (count - 1);
    out.push_back(trajectory[static_cast<std::size_t>(std::lround(pos))]);
  }
  return out;
}

}  // namespace dualmpc::gp
