#include "dgp/glasso.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>

#include "dgp/errors.hpp"
#include "dgp/linalg.hpp"

namespace dgp {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double off_diagonal_l1(const Eigen::MatrixXd& A) {
  return A.cwiseAbs().sum() - A.diagonal().cwiseAbs().sum();
}

/// min 1/2 b^T V b - b^T s + lambda |b|_1, warm-started from b.
void lasso_coordinate_descent(const Eigen::MatrixXd& V, const Eigen::VectorXd& s, double lambda,
                              Eigen::VectorXd& b, const GlassoOptions& opts) {
  const Eigen::Index m = s.size();
  if (m == 0) return;
  if (lambda == 0.0) {
    b = V.llt().solve(s);
    return;
  }
  Eigen::VectorXd Vb = V * b;
  for (int pass = 0; pass < opts.inner_max_iter; ++pass) {
    double max_delta = 0.0;
    double max_abs = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double r = s(k) - Vb(k) + V(k, k) * b(k);
      const double nb = soft_threshold(r, lambda) / V(k, k);
      const double delta = nb - b(k);
      if (delta != 0.0) {
        Vb += delta * V.col(k);
        b(k) = nb;
      }
      max_delta = std::max(max_delta, std::abs(delta));
      max_abs = std::max(max_abs, std::abs(nb));
    }
    if (max_delta <= opts.inner_tol * std::max(1.0, max_abs)) return;
  }
}

Eigen::Index other(Eigen::Index k, Eigen::Index j) { return k < j ? k : k + 1; }

}  // namespace

bool is_numerically_pd(const Eigen::MatrixXd& A, double rcond) {
  if (A.rows() == 0) return true;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::VectorXd piv = llt.matrixLLT().diagonal().array().square();
  if (!piv.allFinite() || !(piv.array() > 0.0).all()) return false;
  return piv.minCoeff() > rcond * A.diagonal().cwiseAbs().maxCoeff();
}

double glasso_objective(const Eigen::MatrixXd& Omega, const Eigen::MatrixXd& S, double lambda) {
  if (Omega.rows() != Omega.cols() || S.rows() != S.cols() || Omega.rows() != S.rows())
    throw ArgumentError("glasso_objective: Omega and S must be square and of equal size");
  Eigen::LLT<Eigen::MatrixXd> llt(Omega);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all())
    throw NumericalError("glasso_objective: Omega is not positive definite");
  return -log_det(llt) + (S.array() * Omega.array()).sum() + lambda * off_diagonal_l1(Omega);
}

double default_glasso_lambda(Eigen::Index p, Eigen::Index n, double c) {
  if (p < 1 || n < 1) throw ArgumentError("default_glasso_lambda needs positive p and n");
  return c * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

PrecisionEstimate glasso_solve(const Eigen::MatrixXd& S_in, double lambda,
                               const GlassoOptions& opts) {
  if (S_in.rows() != S_in.cols() || S_in.rows() == 0)
    throw ArgumentError("glasso_solve: S must be a non-empty square matrix");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("glasso_solve: lambda must be >= 0");
  if (!S_in.allFinite()) throw ArgumentError("glasso_solve: S contains NaN or Inf");
  if ((S_in - S_in.transpose()).cwiseAbs().maxCoeff() >
      1e-8 * std::max(1.0, S_in.cwiseAbs().maxCoeff()))
    throw ArgumentError("glasso_solve: S is not symmetric");

  const Eigen::Index p = S_in.rows();
  Eigen::MatrixXd S = symmetrized(S_in);
  PrecisionEstimate est;
  est.lambda = lambda;

  if (!is_numerically_pd(S)) {
    if (lambda == 0.0) {
      throw NumericalError(
          "glasso_solve: S is singular and lambda = 0; add diagonal jitter or use lambda > 0");
    }
    if (opts.jitter > 0.0) {
      const double mean_diag = S.diagonal().mean();
      est.jitter = opts.jitter * (mean_diag > 0.0 ? mean_diag : 1.0);
      S.diagonal().array() += est.jitter;
    }
  }
  if (!(S.diagonal().array() > 0.0).all())
    throw NumericalError("glasso_solve: S has a non-positive diagonal entry");

  Eigen::MatrixXd W = S;  // unpenalized diagonal stays at S_ii
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p - 1 > 0 ? p - 1 : 0, p);
  Eigen::MatrixXd Omega = S.diagonal().cwiseInverse().asDiagonal();

  Eigen::MatrixXd V(p - 1, p - 1);
  Eigen::VectorXd s(p - 1);
  Eigen::VectorXd b(p - 1);
  for (int sweep = 0; sweep < opts.max_iter; ++sweep) {
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index r = 0; r < p - 1; ++r) {
        s(r) = S(other(r, j), j);
        for (Eigen::Index c = 0; c < p - 1; ++c) V(r, c) = W(other(r, j), other(c, j));
      }
      b = B.col(j);
      lasso_coordinate_descent(V, s, lambda, b, opts);
      B.col(j) = b;
      const Eigen::VectorXd w = V * b;
      for (Eigen::Index r = 0; r < p - 1; ++r) {
        W(other(r, j), j) = w(r);
        W(j, other(r, j)) = w(r);
      }
    }

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      double wb = 0.0;
      for (Eigen::Index r = 0; r < p - 1; ++r) wb += W(other(r, j), j) * B(r, j);
      const double ojj = 1.0 / (W(j, j) - wb);
      next(j, j) = ojj;
      for (Eigen::Index r = 0; r < p - 1; ++r) next(other(r, j), j) = -B(r, j) * ojj;
    }
    next = symmetrized(next);

    const double change = (next - Omega).cwiseAbs().maxCoeff();
    Omega = std::move(next);
    est.sweeps = sweep + 1;
    try {
      est.objective_trace.push_back(glasso_objective(Omega, S, lambda));
    } catch (const NumericalError&) {
      est.objective_trace.push_back(std::numeric_limits<double>::infinity());
    }
    if (change < opts.tol * std::max(1.0, Omega.cwiseAbs().maxCoeff())) {
      est.converged = true;
      break;
    }
  }

  est.Omega = std::move(Omega);
  est.Sigma = std::move(W);
  est.dual_gap = (S.array() * est.Omega.array()).sum() - static_cast<double>(p) +
                 lambda * off_diagonal_l1(est.Omega);
  return est;
}

}  // namespace dgp
