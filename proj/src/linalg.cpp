#include "dgp/linalg.hpp"

#include <cmath>
#include <sstream>

#include "dgp/errors.hpp"

namespace dgp {

namespace {

bool factor_ok(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    const double d = L(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
  }
  return true;
}

}  // namespace

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& A,
                                      std::string_view what) {
  JitteredCholesky out;
  out.llt.compute(A);
  if (factor_ok(out.llt)) return out;

  const double scale = A.rows() > 0 ? std::abs(A.diagonal().mean()) : 0.0;
  const double base = scale > 0.0 ? scale : 1.0;
  double jitter = 0.0;
  for (double rel = kJitterStart; rel <= kJitterMax * (1.0 + 1e-12); rel *= 10.0) {
    jitter = rel * base;
    Eigen::MatrixXd B = A;
    B.diagonal().array() += jitter;
    out.llt.compute(B);
    if (factor_ok(out.llt)) {
      out.jitter = jitter;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "Cholesky factorization of " << what << " (" << A.rows() << "x"
      << A.cols() << ") failed after jitter escalation; final jitter "
      << jitter;
  throw NumericalError(msg.str(), jitter);
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& A) {
  return 0.5 * (A + A.transpose());
}

}  // namespace dgp
