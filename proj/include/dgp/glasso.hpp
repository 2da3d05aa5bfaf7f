#pragma once

#include <vector>

#include <Eigen/Core>

namespace dgp {

struct GlassoOptions {
  /// Stop when the largest change of an Omega entry between sweeps falls
  /// below tol * max(1, max|Omega|).
  double tol = 1e-6;
  int max_iter = 500;
  /// Relative diagonal jitter (times mean(diag S)) added when S is not
  /// numerically positive definite and lambda > 0. Zero disables it.
  double jitter = 1e-8;
  /// Inner lasso coordinate descent limits.
  double inner_tol = 1e-12;
  int inner_max_iter = 10000;
};

/// Sparse precision estimate. Sigma is the solver's covariance iterate, which
/// equals Omega^-1 at convergence.
struct PrecisionEstimate {
  Eigen::MatrixXd Omega;
  Eigen::MatrixXd Sigma;
  double lambda = 0.0;
  /// tr(S Omega) - p + lambda * sum_{i != j} |Omega_ij|
  double dual_gap = 0.0;
  bool converged = false;
  int sweeps = 0;
  double jitter = 0.0;
  /// Penalized objective after every sweep.
  std::vector<double> objective_trace;
};

/// -log|Omega| + tr(S Omega) + lambda * sum_{i != j} |Omega_ij|.
/// Throws NumericalError if Omega is not positive definite.
double glasso_objective(const Eigen::MatrixXd& Omega, const Eigen::MatrixXd& S, double lambda);

/// l1-penalized Gaussian maximum likelihood for the precision matrix, by
/// block coordinate descent over columns of the covariance with an inner
/// lasso solved by coordinate descent. The diagonal is not penalized.
///
/// For lambda = 0 the input must be nonsingular; a singular S is rejected
/// with a NumericalError asking for jitter.
PrecisionEstimate glasso_solve(const Eigen::MatrixXd& S, double lambda,
                               const GlassoOptions& opts = {});

/// c * sqrt(log p / n)
double default_glasso_lambda(Eigen::Index p, Eigen::Index n, double c = 0.5);

/// True when a plain Cholesky of A succeeds with every squared pivot above
/// `rcond` times the largest diagonal entry.
bool is_numerically_pd(const Eigen::MatrixXd& A, double rcond = 1e-12);

}  // namespace dgp
