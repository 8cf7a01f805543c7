#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <vector>

namespace dualmpc::gp {

/// Squared-exponential kernel hyperparameters.
struct GpHyper {
  double sigma_f2 = 0.33;
  double length_scale = 0.3;
  double sigma_v2 = 0.0;
  double jitter = 1e-8;

  void validate() const;
};

double kernel(const GpHyper& h, double z, double z_prime);

/// Append-only scalar regression data (feature z, residual target y).
struct GpDataset {
  std::vector<int> steps;
  std::vector<double> inputs;
  std::vector<double> targets;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }

  /// Appends unless an existing input lies within `dedup_tol` of z.
  /// Returns whether the point was stored.
  bool add(int step, double z, double y, double dedup_tol = 1e-6);

  /// Drops the oldest points until at most `max_points` remain (0 = no cap).
  void enforce_cap(std::size_t max_points);
};

/// CSV with header "k,z,y".
void write_dataset_csv(std::ostream& os, const GpDataset& data);
GpDataset read_dataset_csv(std::istream& is);

enum class GpMode { Exact, Sparse };

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

struct GpPredictionGrad {
  double mean = 0.0;
  double variance = 0.0;
  double dmean = 0.0;
  double dvariance = 0.0;
};

struct GpSecondOrder {
  double mean = 0.0;
  double variance = 0.0;
  double dmean = 0.0;
  double dvariance = 0.0;
  double d2mean = 0.0;
  double d2variance = 0.0;
};

/// Posterior of a zero-mean scalar GP. Exact mode conditions on every data
/// point; sparse mode is the FITC approximation over a set of inducing inputs.
/// Both reduce to  mean = k(z)' alpha,  var = sf2 - |L^-1 k|^2 (+ FITC term),
/// which is what the derivative queries differentiate.
class GpModel {
 public:
  GpModel() = default;

  /// Prior model (no data).
  explicit GpModel(const GpHyper& hyper);

  static GpModel fit(const GpDataset& data, const GpHyper& hyper, GpMode mode = GpMode::Exact,
                     std::span<const double> inducing = {});

  GpPrediction predict(double z) const;
  GpPredictionGrad predict_grad(double z) const;
  GpSecondOrder predict_second_order(double z) const;

  const GpHyper& hyper() const { return hyper_; }
  GpMode mode() const { return mode_; }
  std::size_t num_data() const { return num_data_; }
  const std::vector<double>& basis() const { return basis_; }
  bool is_prior() const { return basis_.empty(); }

 private:
  GpHyper hyper_;
  GpMode mode_ = GpMode::Exact;
  std::size_t num_data_ = 0;
  std::vector<double> basis_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd chol_;        // lower Cholesky factor of the basis Gram matrix
  Eigen::MatrixXd fitc_inv_;    // A^-1 of the FITC posterior (sparse mode only)
};

/// M points equally spaced over [min, max] of the predicted feature trajectory;
/// a degenerate range is widened to +-l/2 around its value.
std::vector<double> select_inducing(std::span<const double> trajectory, int count,
                                    double length_scale);

/// M trajectory samples at equally spaced time indices.
std::vector<double> select_inducing_by_time(std::span<const double> trajectory, int count);

}  // namespace dualmpc::gp
