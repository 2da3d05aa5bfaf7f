#include "dgp/emggm.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "dgp/errors.hpp"
#include "dgp/linalg.hpp"

namespace dgp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs(const Eigen::MatrixXd& A) { return A.cwiseAbs().maxCoeff(); }

/// log|Sigma_mumu| + tr(Sigma_mumu^-1 S_mumu) + lambda * offdiag|Omega|_1;
/// the penalized negative observed-data log-likelihood per test point
/// (up to constants), which EM does not increase.
double observed_objective(const JointCovarianceModel& model, double lambda) {
  const Eigen::Index M = model.expert_count();
  const Eigen::MatrixXd Smm = model.observed_block();
  const Eigen::MatrixXd Sig = model.Sigma.bottomRightCorner(M, M);
  const auto chol = cholesky_with_jitter(Sig, "Sigma_mumu");
  const double penalty = model.Omega.cwiseAbs().sum() - model.Omega.diagonal().cwiseAbs().sum();
  return log_det(chol.llt) + chol.llt.solve(Smm).trace() + lambda * penalty;
}

GlassoOptions inner_options(const EmggmConfig& cfg) {
  GlassoOptions opts = cfg.glasso;
  opts.jitter = cfg.jitter;
  return opts;
}

}  // namespace

void EmggmConfig::validate() const {
  if (max_iterations < 1) throw ArgumentError("EMGGM needs at least one EM iteration");
  if (!(conv_tol > 0.0)) throw ArgumentError("EMGGM convergence tolerance must be positive");
  if (lambda && !(*lambda >= 0.0)) throw ArgumentError("EMGGM lambda must be non-negative");
  if (!(lambda_scale >= 0.0)) throw ArgumentError("EMGGM lambda scale must be non-negative");
  if (!(jitter >= 0.0)) throw ArgumentError("EMGGM jitter must be non-negative");
}

Eigen::VectorXd init_latent(const ExpertPredictions& preds, LatentInit scheme) {
  preds.validate();
  switch (scheme) {
    case LatentInit::gpoe:
      return gpoe(preds).mean;
    case LatentInit::mean_of_experts:
    default:
      return preds.means.rowwise().mean();
  }
}

JointCovarianceModel joint_sample_covariance(const Eigen::VectorXd& y0,
                                             const ExpertPredictions& preds) {
  const Eigen::Index nt = preds.means.rows();
  if (nt < 2) throw ArgumentError("joint sample covariance needs at least two test points");
  if (y0.size() != nt) throw ArgumentError("latent vector length differs from test count");
  const Eigen::Index M = preds.means.cols();
  if (M < 1) throw ArgumentError("need at least one expert");

  JointCovarianceModel model;
  model.latent_mean = y0.mean();
  model.expert_means = preds.means.colwise().mean().transpose();
  Eigen::MatrixXd Z(nt, M + 1);
  Z.col(0) = y0.array() - model.latent_mean;
  Z.rightCols(M) = preds.means.rowwise() - model.expert_means.transpose();
  model.S = (Z.transpose() * Z) / static_cast<double>(nt);
  return model;
}

void e_step(JointCovarianceModel& model) {
  const Eigen::Index M = model.expert_count();
  if (model.Sigma.rows() != M + 1 || model.Sigma.cols() != M + 1)
    throw ArgumentError("e_step needs a current Sigma of size (M+1)x(M+1)");
  const Eigen::MatrixXd Smm = model.observed_block();
  const Eigen::MatrixXd Sig_mm = model.Sigma.bottomRightCorner(M, M);
  const Eigen::VectorXd sig_my = model.Sigma.col(0).tail(M);
  const double sig_yy = model.Sigma(0, 0);

  const auto chol = cholesky_with_jitter(Sig_mm, "Sigma_mumu in the E-step");
  const Eigen::VectorXd a = chol.llt.solve(sig_my);  // Sigma_mumu^-1 Sigma_mu,y

  const Eigen::VectorXd s_my = Smm * a;
  const double s_yy = sig_yy - sig_my.dot(a) + a.dot(s_my);
  model.S.col(0).tail(M) = s_my;
  model.S.row(0).tail(M) = s_my.transpose();
  model.S(0, 0) = s_yy;
}

RegularizedCovariance regularize_for_m_step(const Eigen::MatrixXd& S, double relative_jitter) {
  RegularizedCovariance out{symmetrized(S), 0.0, false};
  if (relative_jitter <= 0.0 || is_numerically_pd(out.S)) return out;
  const double mean_diag = out.S.diagonal().mean();
  out.jitter = relative_jitter * (mean_diag > 0.0 ? mean_diag : 1.0);
  const Eigen::Index M = out.S.rows() - 1;
  if (is_numerically_pd(out.S.bottomRightCorner(M, M))) {
    Eigen::MatrixXd candidate = out.S;
    candidate(0, 0) += out.jitter;
    if (is_numerically_pd(candidate)) {
      out.S = std::move(candidate);
      return out;
    }
  }
  out.S.diagonal().array() += out.jitter;
  out.whole_diagonal = true;
  return out;
}

PrecisionEstimate m_step(JointCovarianceModel& model, double lambda, const EmggmConfig& cfg) {
  const RegularizedCovariance reg = regularize_for_m_step(model.S, cfg.jitter);
  PrecisionEstimate est = glasso_solve(reg.S, lambda, inner_options(cfg));
  est.jitter += reg.jitter;
  model.Omega = est.Omega;
  model.Sigma = est.Sigma;
  return est;
}

Eigen::VectorXd conditional_coefficients(const Eigen::MatrixXd& Sigma) {
  const Eigen::Index M = Sigma.rows() - 1;
  const auto chol = cholesky_with_jitter(Sigma.bottomRightCorner(M, M), "Sigma_mumu");
  return chol.llt.solve(Sigma.col(0).tail(M));
}

EmggmResult emggm_aggregate(const ExpertPredictions& preds, const EmggmConfig& cfg) {
  const auto start = Clock::now();
  cfg.validate();
  preds.validate();
  const Eigen::Index nt = preds.test_count();
  const Eigen::Index M = preds.expert_count();
  if (nt < 2) throw ArgumentError("EMGGM needs at least two test points");

  EmggmResult result;
  result.lambda = cfg.lambda ? *cfg.lambda : default_glasso_lambda(M + 1, nt, cfg.lambda_scale);
  const double lambda = result.lambda;

  JointCovarianceModel model = joint_sample_covariance(init_latent(preds, cfg.init), preds);
  m_step(model, lambda, cfg);

  Eigen::MatrixXd best_sigma = model.Sigma;
  double best_obj = observed_objective(model, lambda);

  for (int t = 1; t <= cfg.max_iterations; ++t) {
    const auto iter_start = Clock::now();
    EmIteration it;
    it.iteration = t;

    e_step(model);
    const RegularizedCovariance reg = regularize_for_m_step(model.S, cfg.jitter);
    const Eigen::MatrixXd old_omega = model.Omega;
    try {
      it.objective_before = glasso_objective(old_omega, reg.S, lambda);
    } catch (const NumericalError&) {
      it.objective_before = std::numeric_limits<double>::infinity();
    }
    const PrecisionEstimate est = glasso_solve(reg.S, lambda, inner_options(cfg));
    model.Omega = est.Omega;
    model.Sigma = est.Sigma;
    model.iteration = t;
    it.objective_after = glasso_objective(model.Omega, reg.S, lambda);
    it.jitter = reg.jitter;
    it.glasso_sweeps = est.sweeps;
    const double scale = max_abs(old_omega);
    it.omega_change = max_abs(model.Omega - old_omega) / (scale > 0.0 ? scale : 1.0);

    const double obj = observed_objective(model, lambda);
    it.observed_loglik = -obj;
    if (obj <= best_obj) {
      best_obj = obj;
      best_sigma = model.Sigma;
    }
    it.wall_time_s = seconds_since(iter_start);
    result.trace.push_back(it);
    if (it.omega_change < cfg.conv_tol) {
      result.converged = true;
      break;
    }
  }

  const Eigen::MatrixXd& sigma = result.converged ? model.Sigma : best_sigma;
  result.coefficients = conditional_coefficients(sigma);
  result.intercept = model.latent_mean - model.expert_means.dot(result.coefficients);
  result.mean = ((preds.means.rowwise() - model.expert_means.transpose()) * result.coefficients)
                    .array() +
                model.latent_mean;
  result.model = std::move(model);
  result.peak_matrix_bytes = static_cast<std::size_t>(nt * (M + 1)) * sizeof(double);
  result.wall_time_s = seconds_since(start);
  return result;
}

}  // namespace dgp
