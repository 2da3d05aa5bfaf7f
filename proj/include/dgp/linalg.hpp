#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <string_view>

namespace dgp {

/// Relative jitter ladder: 1e-10 * mean(diag), escalated x10 up to 1e-4.
inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  /// Absolute amount added to the diagonal (0 when the plain factorization
  /// succeeded).
  double jitter = 0.0;
};

/// Cholesky of a symmetric matrix. On failure, retries with the jitter ladder
/// and throws NumericalError reporting the final jitter when every rung fails.
JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& A,
                                      std::string_view what = "matrix");

/// log|A| from a Cholesky factor.
double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt);

/// (A + A^T) / 2
Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& A);

}  // namespace dgp
