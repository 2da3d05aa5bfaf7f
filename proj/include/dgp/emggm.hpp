#pragma once

#include <optional>
#include <vector>

#include "dgp/aggregation.hpp"
#include "dgp/glasso.hpp"

namespace dgp {

enum class LatentInit { mean_of_experts, gpoe };

struct EmggmConfig {
  /// Glasso penalty; std::nullopt selects lambda_scale * sqrt(log(M+1) / n_t).
  std::optional<double> lambda;
  double lambda_scale = 0.5;
  /// Maximum number of EM iterations (R).
  int max_iterations = 20;
  /// Early stop on max|Omega_new - Omega_old| / max|Omega_old|.
  double conv_tol = 1e-4;
  LatentInit init = LatentInit::mean_of_experts;
  /// Relative jitter for degenerate sample covariances.
  double jitter = 1e-8;
  GlassoOptions glasso;

  /// Throws ArgumentError unless R >= 1, conv_tol > 0 and lambda >= 0.
  void validate() const;
};

/// State of the joint Gaussian over (y*, mu_1*, ..., mu_M*). Index 0 is the
/// latent target in every (M+1)-sized structure.
struct JointCovarianceModel {
  Eigen::MatrixXd S;      // current (expected) sample covariance
  Eigen::MatrixXd Omega;  // current precision
  Eigen::MatrixXd Sigma;  // current covariance
  int iteration = 0;
  Eigen::VectorXd expert_means;  // per-column centering offsets
  double latent_mean = 0.0;

  Eigen::Index expert_count() const { return S.rows() - 1; }
  /// S_{mu mu}: the observed block, never modified after construction.
  Eigen::MatrixXd observed_block() const { return S.bottomRightCorner(S.rows() - 1, S.cols() - 1); }
};

/// Starting latent vector: row means of the expert means, or the GPoE mean.
Eigen::VectorXd init_latent(const ExpertPredictions& preds, LatentInit scheme);

/// Centers each column over the test points and forms S = Z^T Z / n_t for
/// Z = [y0 | mu]. Omega and Sigma are left empty.
JointCovarianceModel joint_sample_covariance(const Eigen::VectorXd& y0,
                                             const ExpertPredictions& preds);

/// Conditional expectation of the latent blocks of S under the current Sigma:
///   S_{mu y} <- S_mumu Sigma_mumu^-1 Sigma_{mu y}
///   S_{y y}  <- Sigma_yy - Sigma_{y mu} Sigma_mumu^-1 Sigma_{mu y}
///              + Sigma_{y mu} Sigma_mumu^-1 S_mumu Sigma_mumu^-1 Sigma_{mu y}
/// Only row/column 0 of model.S changes.
void e_step(JointCovarianceModel& model);

/// Covariance handed to the glasso solver: model.S, with jitter on the latent
/// diagonal entry when only the latent direction is degenerate, or on the
/// whole diagonal when the observed block itself is singular.
struct RegularizedCovariance {
  Eigen::MatrixXd S;
  double jitter = 0.0;
  bool whole_diagonal = false;
};
RegularizedCovariance regularize_for_m_step(const Eigen::MatrixXd& S, double relative_jitter);

/// Glasso on the (regularized) expected covariance; refreshes Omega, Sigma.
PrecisionEstimate m_step(JointCovarianceModel& model, double lambda, const EmggmConfig& cfg);

struct EmIteration {
  int iteration = 0;
  /// Penalized objective at the expected covariance of this iteration,
  /// evaluated before (previous Omega) and after (new Omega) the M-step.
  double objective_before = 0.0;
  double objective_after = 0.0;
  double omega_change = 0.0;
  /// Penalized observed-data log-likelihood of the expert means (logged only).
  double observed_loglik = 0.0;
  double jitter = 0.0;
  int glasso_sweeps = 0;
  double wall_time_s = 0.0;
};

struct EmggmResult {
  Eigen::VectorXd mean;
  /// Linear map applied to the centered expert means.
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  bool converged = false;
  std::vector<EmIteration> trace;
  JointCovarianceModel model;
  double wall_time_s = 0.0;
  std::size_t peak_matrix_bytes = 0;
};

/// EM over the latent Gaussian graphical model, followed by the conditional
/// mean y = latent_mean + Sigma_{y mu} Sigma_mumu^-1 (mu - expert_means).
EmggmResult emggm_aggregate(const ExpertPredictions& preds, const EmggmConfig& cfg = {});

/// Conditional-mean coefficients Sigma_mumu^-1 Sigma_{mu y} for a joint
/// covariance with the latent at index 0.
Eigen::VectorXd conditional_coefficients(const Eigen::MatrixXd& Sigma);

}  // namespace dgp
