#pragma once

#include <vector>

#include "dgp/gp.hpp"

namespace dgp {

/// Covariances of the expert means at a single test input x*.
struct PointwiseCovariances {
  Eigen::MatrixXd K_A;  // M x M, cov(mu_i(x*), mu_j(x*))
  Eigen::VectorXd k_A;  // M, cov(y*, mu_i(x*))
};

/// With G_i = C_i^-1 k(X_i, x*):
///   K_A(i,j) = G_i^T k(X_i, X_j) G_j  for i != j,
///   K_A(i,i) = G_i^T C_i G_i = k(X_i, x*)^T G_i,
///   k_A(i)   = k(X_i, x*)^T G_i.
/// Diagonal blocks carry the observation noise since cov(y_i, y_i) = C_i.
PointwiseCovariances npae_pointwise_cov(const std::vector<TrainedExpert>& experts,
                                        const Hyperparameters& hp,
                                        const Eigen::Ref<const Eigen::VectorXd>& x_star);

struct NpaeResult {
  Eigen::VectorXd mean;
  double wall_time_s = 0.0;
  /// Largest dense matrix held at once (bytes).
  std::size_t peak_matrix_bytes = 0;
  /// Largest jitter applied to any K_A.
  double max_jitter = 0.0;
};

/// mean(x*) = k_A^T K_A^-1 mu(x*) for every row of X_test. Covariances are
/// assembled for all test points at once, one expert pair at a time.
NpaeResult npae_aggregate(const std::vector<TrainedExpert>& experts, const Hyperparameters& hp,
                          const Eigen::MatrixXd& X_test);

}  // namespace dgp
