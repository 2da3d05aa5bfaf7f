#include "dgp/npae.hpp"

#include <chrono>
#include <sstream>

#include "dgp/errors.hpp"
#include "dgp/linalg.hpp"

namespace dgp {

namespace {

void check_experts(const std::vector<TrainedExpert>& experts, const Hyperparameters& hp,
                   Eigen::Index dim) {
  if (experts.empty()) throw ArgumentError("NPAE needs at least one expert");
  for (const TrainedExpert& e : experts) {
    if (!(e.hyperparameters() == hp))
      throw ArgumentError("all NPAE experts must be factorized with the given hyperparameters");
    if (e.data().dim() != dim) throw ArgumentError("test input dimension mismatch");
  }
}

double conditional_mean(const Eigen::MatrixXd& K_A, const Eigen::VectorXd& k_A,
                        const Eigen::VectorXd& mu, double& jitter_out) {
  const auto chol = cholesky_with_jitter(K_A, "NPAE expert covariance K_A");
  jitter_out = chol.jitter;
  return k_A.dot(chol.llt.solve(mu));
}

}  // namespace

PointwiseCovariances npae_pointwise_cov(const std::vector<TrainedExpert>& experts,
                                        const Hyperparameters& hp,
                                        const Eigen::Ref<const Eigen::VectorXd>& x_star) {
  check_experts(experts, hp, x_star.size());
  const auto M = static_cast<Eigen::Index>(experts.size());
  const Eigen::MatrixXd xs = x_star.transpose();

  std::vector<Eigen::VectorXd> k_star(experts.size());
  std::vector<Eigen::VectorXd> gamma(experts.size());
  PointwiseCovariances out;
  out.K_A.resize(M, M);
  out.k_A.resize(M);
  for (std::size_t i = 0; i < experts.size(); ++i) {
    k_star[i] = kernel_matrix(experts[i].data().X, xs, hp).col(0);
    gamma[i] = experts[i].solve(k_star[i]);
    out.k_A(static_cast<Eigen::Index>(i)) = k_star[i].dot(gamma[i]);
  }
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto si = static_cast<std::size_t>(i);
    out.K_A(i, i) = out.k_A(i);
    for (Eigen::Index j = i + 1; j < M; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const Eigen::MatrixXd Kij = kernel_matrix(experts[si].data().X, experts[sj].data().X, hp);
      const double v = gamma[si].dot(Kij * gamma[sj]);
      out.K_A(i, j) = v;
      out.K_A(j, i) = v;
    }
  }
  return out;
}

NpaeResult npae_aggregate(const std::vector<TrainedExpert>& experts, const Hyperparameters& hp,
                          const Eigen::MatrixXd& X_test) {
  const auto start = std::chrono::steady_clock::now();
  check_experts(experts, hp, X_test.cols());
  const auto M = static_cast<Eigen::Index>(experts.size());
  const Eigen::Index nt = X_test.rows();
  auto bytes = [](Eigen::Index r, Eigen::Index c) {
    return static_cast<std::size_t>(r * c) * sizeof(double);
  };

  NpaeResult result;
  std::vector<Eigen::MatrixXd> gamma(experts.size());  // n_i x n_t
  Eigen::MatrixXd mu(nt, M);
  Eigen::MatrixXd k_A(nt, M);
  std::size_t gamma_bytes = 0;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    const Eigen::MatrixXd Ks = kernel_matrix(experts[i].data().X, X_test, hp);
    gamma[i] = experts[i].solve(Ks);
    const auto c = static_cast<Eigen::Index>(i);
    mu.col(c) = Ks.transpose() * experts[i].alpha();
    k_A.col(c) = (Ks.array() * gamma[i].array()).colwise().sum().transpose();
    gamma_bytes += bytes(gamma[i].rows(), gamma[i].cols());
  }

  // K_A for every test point, stored as M x M blocks side by side.
  std::vector<Eigen::MatrixXd> K_A(static_cast<std::size_t>(nt), Eigen::MatrixXd(M, M));
  std::size_t pair_bytes = 0;
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto si = static_cast<std::size_t>(i);
    for (Eigen::Index t = 0; t < nt; ++t) K_A[static_cast<std::size_t>(t)](i, i) = k_A(t, i);
    for (Eigen::Index j = i + 1; j < M; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const Eigen::MatrixXd Kij = kernel_matrix(experts[si].data().X, experts[sj].data().X, hp);
      const Eigen::MatrixXd P = Kij * gamma[sj];
      const Eigen::VectorXd v = (gamma[si].array() * P.array()).colwise().sum().transpose();
      pair_bytes = std::max(pair_bytes, bytes(Kij.rows(), Kij.cols()) + bytes(P.rows(), P.cols()));
      for (Eigen::Index t = 0; t < nt; ++t) {
        K_A[static_cast<std::size_t>(t)](i, j) = v(t);
        K_A[static_cast<std::size_t>(t)](j, i) = v(t);
      }
    }
  }
  result.peak_matrix_bytes = gamma_bytes + pair_bytes + static_cast<std::size_t>(nt) * bytes(M, M);

  result.mean.resize(nt);
  for (Eigen::Index t = 0; t < nt; ++t) {
    double jitter = 0.0;
    try {
      result.mean(t) = conditional_mean(K_A[static_cast<std::size_t>(t)], k_A.row(t).transpose(),
                                        mu.row(t).transpose(), jitter);
    } catch (const NumericalError& err) {
      std::ostringstream msg;
      msg << err.what() << " at test index " << t;
      throw NumericalError(msg.str(), err.jitter());
    }
    result.max_jitter = std::max(result.max_jitter, jitter);
  }
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace dgp
