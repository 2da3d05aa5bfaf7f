#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace dgp {

/// Squared-exponential kernel parameters shared by every expert.
///
/// `lengthscale` holds a single entry for the isotropic kernel or one entry
/// per input dimension (ARD). All values must be strictly positive.
struct Hyperparameters {
  std::vector<double> lengthscale{1.0};
  double signal_variance = 1.0;
  double noise_variance = 0.1;

  bool is_ard() const { return lengthscale.size() > 1; }

  /// Throws ArgumentError unless all fields are positive and finite and the
  /// lengthscale count is 1 or `dim`.
  void validate(Eigen::Index dim) const;

  /// Packs (log l_1..l_k, log sf^2, log sn^2).
  Eigen::VectorXd to_log_params() const;
  static Hyperparameters from_log_params(const Eigen::VectorXd& log_params);

  friend bool operator==(const Hyperparameters&,
                         const Hyperparameters&) = default;
};

/// Affine maps applied to the inputs and targets of a Dataset. Identity when
/// `applied` is false.
struct NormalizationState {
  bool applied = false;
  Eigen::RowVectorXd x_offset;
  Eigen::RowVectorXd x_scale;
  double y_offset = 0.0;
  double y_scale = 1.0;
};

/// Row-major design: X is n x d, one observation per row.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  NormalizationState normalization;

  Dataset() = default;
  /// Validates shapes and finiteness, throwing ArgumentError.
  Dataset(Eigen::MatrixXd X, Eigen::VectorXd y, NormalizationState norm = {});

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  bool empty() const { return X.rows() == 0; }

  /// Subset in the order given by `rows`.
  Dataset select(const std::vector<Eigen::Index>& rows) const;
};

/// Row-wise concatenation; both inputs must share the input dimension.
Dataset concatenate(const Dataset& a, const Dataset& b);

/// k(x, x') = sf^2 exp(-|x - x'|^2 / (2 l^2)), per-dimension l for ARD.
double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x_prime,
                   const Hyperparameters& hp);

/// Gram matrix between the rows of A and B.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Hyperparameters& hp);

/// k(x, x) for every row of X; constant sf^2 for a stationary kernel.
Eigen::VectorXd kernel_diagonal(const Eigen::MatrixXd& X,
                                const Hyperparameters& hp);

/// log p(y | X, theta) = -1/2 y^T C^-1 y - 1/2 log|C| - n/2 log(2 pi)
/// with C = K + sn^2 I, via Cholesky.
double log_marginal_likelihood(const Dataset& data, const Hyperparameters& hp);

struct LmlEvaluation {
  double value = 0.0;
  /// d lml / d (log l_1..l_k, log sf^2, log sn^2)
  Eigen::VectorXd gradient;
};

/// Value and log-parameter gradient from a single factorization.
LmlEvaluation lml_with_gradient(const Dataset& data, const Hyperparameters& hp);

/// Gradient of log_marginal_likelihood in log-parameter space:
/// component j is 1/2 tr((a a^T - C^-1) dC/dtheta_j) with a = C^-1 y.
Eigen::VectorXd lml_gradient(const Dataset& data, const Hyperparameters& hp);

struct OptimizerSettings {
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;
  /// Total starts including the caller's init.
  int restarts = 3;
  /// Standard deviation (log units) of the perturbation for extra starts.
  double restart_spread = 1.0;
  std::uint64_t seed = 0;
};

struct RestartReport {
  Eigen::VectorXd start;  // log params
  Eigen::VectorXd end;    // log params
  double objective = 0.0; // summed lml at `end`
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string error;      // non-empty when the restart failed numerically
};

struct HyperparameterFit {
  Hyperparameters hyperparameters;
  double log_likelihood = 0.0;  // sum over partitions
  std::vector<RestartReport> restarts;
};

/// Sum of per-partition lml (factorized objective).
LmlEvaluation summed_lml(const std::vector<Dataset>& partitions,
                         const Hyperparameters& hp);

/// Maximizes the summed lml over one shared set of hyperparameters with BFGS
/// in log-parameter space. The first start is `init`; the best restart wins.
HyperparameterFit fit_shared_hyperparameters(const std::vector<Dataset>& partitions,
                                             const Hyperparameters& init,
                                             const OptimizerSettings& opts = {});

/// A GP conditioned on one partition, factorized once for repeated
/// prediction. Immutable after construction.
class TrainedExpert {
 public:
  TrainedExpert(Dataset data, Hyperparameters hp);

  const Dataset& data() const { return data_; }
  const Hyperparameters& hyperparameters() const { return hp_; }
  /// Factor of K + sn^2 I (+ jitter when it was required).
  const Eigen::LLT<Eigen::MatrixXd>& cholesky() const { return chol_; }
  Eigen::MatrixXd chol_lower() const { return chol_.matrixL(); }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  double jitter() const { return jitter_; }

  /// C^-1 B
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const { return chol_.solve(B); }

 private:
  Dataset data_;
  Hyperparameters hp_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // includes the noise variance
};

/// Posterior mean k*^T alpha and predictive variance
/// k(x*,x*) + sn^2 - k*^T C^-1 k*, floored at sn^2.
Prediction predict(const TrainedExpert& expert, const Eigen::MatrixXd& X_test,
                   const Hyperparameters& hp);

}  // namespace dgp
