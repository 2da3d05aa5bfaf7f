#include "dgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "dgp/errors.hpp"
#include "dgp/linalg.hpp"

namespace dgp {

namespace {

constexpr double kMaxAbsLogParam = 30.0;

Eigen::RowVectorXd inverse_lengthscales(const Hyperparameters& hp, Eigen::Index dim) {
  Eigen::RowVectorXd inv(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    inv(k) = 1.0 / (hp.is_ard() ? hp.lengthscale[static_cast<std::size_t>(k)]
                                : hp.lengthscale.front());
  }
  return inv;
}

/// Squared distance contribution of input dimension k, in lengthscale units.
Eigen::MatrixXd scaled_sq_dist_dim(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   Eigen::Index k, double inv_l) {
  const Eigen::VectorXd a = A.col(k) * inv_l;
  const Eigen::VectorXd b = B.col(k) * inv_l;
  return (a.replicate(1, B.rows()) - b.transpose().replicate(A.rows(), 1))
      .array()
      .square()
      .matrix();
}

void check_dims(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                const Hyperparameters& hp) {
  if (A.cols() != B.cols()) {
    std::ostringstream msg;
    msg << "kernel input dimension mismatch: " << A.cols() << " vs " << B.cols();
    throw ArgumentError(msg.str());
  }
  hp.validate(A.cols());
}

Eigen::MatrixXd noisy_gram(const Dataset& data, const Hyperparameters& hp) {
  Eigen::MatrixXd C = kernel_matrix(data.X, data.X, hp);
  C.diagonal().array() += hp.noise_variance;
  return C;
}

}  // namespace

void Hyperparameters::validate(Eigen::Index dim) const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (lengthscale.empty()) throw ArgumentError("lengthscale must not be empty");
  if (lengthscale.size() != 1 && static_cast<Eigen::Index>(lengthscale.size()) != dim) {
    std::ostringstream msg;
    msg << "ARD lengthscale has " << lengthscale.size() << " entries for input dimension "
        << dim;
    throw ArgumentError(msg.str());
  }
  if (!std::all_of(lengthscale.begin(), lengthscale.end(), positive) ||
      !positive(signal_variance) || !positive(noise_variance)) {
    throw ArgumentError("hyperparameters must be strictly positive and finite");
  }
}

Eigen::VectorXd Hyperparameters::to_log_params() const {
  const auto k = static_cast<Eigen::Index>(lengthscale.size());
  Eigen::VectorXd p(k + 2);
  for (Eigen::Index i = 0; i < k; ++i) p(i) = std::log(lengthscale[static_cast<std::size_t>(i)]);
  p(k) = std::log(signal_variance);
  p(k + 1) = std::log(noise_variance);
  return p;
}

Hyperparameters Hyperparameters::from_log_params(const Eigen::VectorXd& log_params) {
  if (log_params.size() < 3) throw ArgumentError("need at least 3 log parameters");
  Hyperparameters hp;
  const Eigen::Index k = log_params.size() - 2;
  hp.lengthscale.resize(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) hp.lengthscale[static_cast<std::size_t>(i)] = std::exp(log_params(i));
  hp.signal_variance = std::exp(log_params(k));
  hp.noise_variance = std::exp(log_params(k + 1));
  return hp;
}

Dataset::Dataset(Eigen::MatrixXd X_in, Eigen::VectorXd y_in, NormalizationState norm)
    : X(std::move(X_in)), y(std::move(y_in)), normalization(std::move(norm)) {
  if (X.rows() != y.size()) {
    std::ostringstream msg;
    msg << "dataset has " << X.rows() << " input rows but " << y.size() << " targets";
    throw ArgumentError(msg.str());
  }
  if (!X.allFinite() || !y.allFinite()) throw ArgumentError("dataset contains NaN or Inf");
}

Dataset Dataset::select(const std::vector<Eigen::Index>& rows) const {
  Eigen::MatrixXd Xs(static_cast<Eigen::Index>(rows.size()), X.cols());
  Eigen::VectorXd ys(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index r = rows[i];
    if (r < 0 || r >= X.rows()) throw ArgumentError("row index out of range");
    Xs.row(static_cast<Eigen::Index>(i)) = X.row(r);
    ys(static_cast<Eigen::Index>(i)) = y(r);
  }
  Dataset out;
  out.X = std::move(Xs);
  out.y = std::move(ys);
  out.normalization = normalization;
  return out;
}

Dataset concatenate(const Dataset& a, const Dataset& b) {
  if (a.dim() != b.dim()) throw ArgumentError("cannot concatenate datasets of different dimension");
  Dataset out;
  out.X.resize(a.size() + b.size(), a.dim());
  out.X << a.X, b.X;
  out.y.resize(a.size() + b.size());
  out.y << a.y, b.y;
  out.normalization = a.normalization;
  return out;
}

double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& x_prime,
                   const Hyperparameters& hp) {
  if (x.size() != x_prime.size()) {
    std::ostringstream msg;
    msg << "kernel input dimension mismatch: " << x.size() << " vs " << x_prime.size();
    throw ArgumentError(msg.str());
  }
  hp.validate(x.size());
  const Eigen::RowVectorXd inv_l = inverse_lengthscales(hp, x.size());
  double r2 = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double d = (x(k) - x_prime(k)) * inv_l(k);
    r2 += d * d;
  }
  return hp.signal_variance * std::exp(-0.5 * r2);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Hyperparameters& hp) {
  check_dims(A, B, hp);
  const Eigen::RowVectorXd inv_l = inverse_lengthscales(hp, A.cols());
  Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(A.rows(), B.rows());
  for (Eigen::Index k = 0; k < A.cols(); ++k) r2 += scaled_sq_dist_dim(A, B, k, inv_l(k));
  return hp.signal_variance * (-0.5 * r2.array()).exp().matrix();
}

Eigen::VectorXd kernel_diagonal(const Eigen::MatrixXd& X, const Hyperparameters& hp) {
  return Eigen::VectorXd::Constant(X.rows(), hp.signal_variance);
}

double log_marginal_likelihood(const Dataset& data, const Hyperparameters& hp) {
  hp.validate(data.dim());
  const auto chol = cholesky_with_jitter(noisy_gram(data, hp), "K + noise*I");
  const Eigen::VectorXd v = chol.llt.matrixL().solve(data.y);
  const double n = static_cast<double>(data.size());
  return -0.5 * v.squaredNorm() - 0.5 * log_det(chol.llt) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

LmlEvaluation lml_with_gradient(const Dataset& data, const Hyperparameters& hp) {
  hp.validate(data.dim());
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  const Eigen::MatrixXd K = kernel_matrix(data.X, data.X, hp);
  Eigen::MatrixXd C = K;
  C.diagonal().array() += hp.noise_variance;
  const auto chol = cholesky_with_jitter(C, "K + noise*I");

  LmlEvaluation out;
  const Eigen::VectorXd alpha = chol.llt.solve(data.y);
  out.value = -0.5 * data.y.dot(alpha) - 0.5 * log_det(chol.llt) -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // W = a a^T - C^-1; each gradient entry is 1/2 <W, dC/dtheta>.
  Eigen::MatrixXd W = -chol.llt.solve(Eigen::MatrixXd::Identity(n, n));
  W.noalias() += alpha * alpha.transpose();

  const auto n_ls = static_cast<Eigen::Index>(hp.lengthscale.size());
  out.gradient.resize(n_ls + 2);
  const Eigen::RowVectorXd inv_l = inverse_lengthscales(hp, d);
  if (hp.is_ard()) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::MatrixXd Dk = scaled_sq_dist_dim(data.X, data.X, k, inv_l(k));
      out.gradient(k) = 0.5 * (W.array() * K.array() * Dk.array()).sum();
    }
  } else {
    Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k < d; ++k) r2 += scaled_sq_dist_dim(data.X, data.X, k, inv_l(k));
    out.gradient(0) = 0.5 * (W.array() * K.array() * r2.array()).sum();
  }
  out.gradient(n_ls) = 0.5 * (W.array() * K.array()).sum();
  out.gradient(n_ls + 1) = 0.5 * hp.noise_variance * W.trace();
  return out;
}

Eigen::VectorXd lml_gradient(const Dataset& data, const Hyperparameters& hp) {
  return lml_with_gradient(data, hp).gradient;
}

LmlEvaluation summed_lml(const std::vector<Dataset>& partitions, const Hyperparameters& hp) {
  LmlEvaluation total;
  total.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hp.lengthscale.size()) + 2);
  // Fixed summation order keeps training reproducible.
  for (const Dataset& part : partitions) {
    const LmlEvaluation e = lml_with_gradient(part, hp);
    total.value += e.value;
    total.gradient += e.gradient;
  }
  return total;
}

namespace {

struct Objective {
  const std::vector<Dataset>& partitions;

  struct Point {
    bool ok = false;
    double f = std::numeric_limits<double>::infinity();  // negative summed lml
    Eigen::VectorXd g;
    std::string error;
  };

  Point operator()(const Eigen::VectorXd& log_params) const {
    Point p;
    if ((log_params.array().abs() > kMaxAbsLogParam).any() || !log_params.allFinite()) {
      p.error = "log parameter out of range";
      return p;
    }
    try {
      const LmlEvaluation e = summed_lml(partitions, Hyperparameters::from_log_params(log_params));
      if (!std::isfinite(e.value) || !e.gradient.allFinite()) {
        p.error = "non-finite likelihood";
        return p;
      }
      p.ok = true;
      p.f = -e.value;
      p.g = -e.gradient;
    } catch (const NumericalError& err) {
      p.error = err.what();
    }
    return p;
  }
};

/// BFGS with Armijo backtracking on the negative summed lml.
RestartReport run_bfgs(const Objective& objective, const Eigen::VectorXd& start,
                       const OptimizerSettings& opts) {
  constexpr double kArmijo = 1e-4;
  constexpr double kMaxStep = 2.0;  // log units per iteration
  constexpr int kMaxBacktracks = 30;
  constexpr double kRelativeDecrease = 1e-13;

  RestartReport report;
  report.start = start;
  report.end = start;

  Eigen::VectorXd x = start;
  Objective::Point cur = objective(x);
  if (!cur.ok) {
    report.error = "initial point failed: " + cur.error;
    report.objective = -std::numeric_limits<double>::infinity();
    return report;
  }
  const Eigen::Index dim = x.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;

  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (cur.g.norm() < opts.gradient_tolerance) {
      report.converged = true;
      break;
    }
    Eigen::VectorXd dir = -H * cur.g;
    if (cur.g.dot(dir) >= 0.0) {
      H.setIdentity();
      dir = -cur.g;
    }
    const double max_comp = dir.cwiseAbs().maxCoeff();
    if (max_comp > kMaxStep) dir *= kMaxStep / max_comp;
    const double slope = cur.g.dot(dir);

    double step = 1.0;
    Objective::Point next;
    Eigen::VectorXd x_next;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= 0.5) {
      x_next = x + step * dir;
      next = objective(x_next);
      if (next.ok && next.f <= cur.f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no further decrease representable
    // Stalled: the objective no longer changes at working precision.
    const bool stalled = cur.f - next.f <= kRelativeDecrease * std::max(1.0, std::abs(cur.f));

    const Eigen::VectorXd s = x_next - x;
    const Eigen::VectorXd yv = next.g - cur.g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        H *= sy / yv.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }
    x = x_next;
    cur = std::move(next);
    if (stalled) {
      ++it;
      break;
    }
  }
  if (!report.converged && cur.g.norm() < opts.gradient_tolerance) report.converged = true;
  report.iterations = it;
  report.end = x;
  report.objective = -cur.f;
  report.gradient_norm = cur.g.norm();
  return report;
}

}  // namespace

HyperparameterFit fit_shared_hyperparameters(const std::vector<Dataset>& partitions,
                                             const Hyperparameters& init,
                                             const OptimizerSettings& opts) {
  if (partitions.empty()) throw ArgumentError("need at least one partition");
  for (const Dataset& p : partitions) {
    if (p.empty()) throw ArgumentError("partitions must be non-empty");
    if (p.dim() != partitions.front().dim()) throw ArgumentError("partition dimensions differ");
  }
  init.validate(partitions.front().dim());
  if (opts.restarts < 1 || opts.max_iterations < 0) throw ArgumentError("invalid optimizer settings");

  const Objective objective{partitions};
  const Eigen::VectorXd x0 = init.to_log_params();
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, opts.restart_spread);

  HyperparameterFit fit;
  const RestartReport* best = nullptr;
  for (int r = 0; r < opts.restarts; ++r) {
    Eigen::VectorXd start = x0;
    if (r > 0) {
      for (Eigen::Index i = 0; i < start.size(); ++i) start(i) += normal(rng);
    }
    fit.restarts.push_back(run_bfgs(objective, start, opts));
  }
  for (const RestartReport& rep : fit.restarts) {
    if (!rep.error.empty()) continue;
    if (best == nullptr || rep.objective > best->objective) best = &rep;
  }
  if (best == nullptr) {
    std::ostringstream msg;
    msg << "all " << fit.restarts.size() << " hyperparameter restarts failed:";
    for (std::size_t i = 0; i < fit.restarts.size(); ++i) msg << " [" << i << "] " << fit.restarts[i].error;
    throw NumericalError(msg.str());
  }
  fit.hyperparameters = Hyperparameters::from_log_params(best->end);
  fit.log_likelihood = best->objective;
  return fit;
}

TrainedExpert::TrainedExpert(Dataset data, Hyperparameters hp)
    : data_(std::move(data)), hp_(std::move(hp)) {
  if (data_.empty()) throw ArgumentError("cannot train an expert on an empty partition");
  hp_.validate(data_.dim());
  auto chol = cholesky_with_jitter(noisy_gram(data_, hp_), "expert K + noise*I");
  chol_ = std::move(chol.llt);
  jitter_ = chol.jitter;
  alpha_ = chol_.solve(data_.y);
}

Prediction predict(const TrainedExpert& expert, const Eigen::MatrixXd& X_test,
                   const Hyperparameters& hp) {
  if (X_test.cols() != expert.data().dim()) {
    std::ostringstream msg;
    msg << "test inputs have dimension " << X_test.cols() << ", expert expects "
        << expert.data().dim();
    throw ArgumentError(msg.str());
  }
  if (!(hp == expert.hyperparameters())) {
    throw ArgumentError("hyperparameters differ from those used to factorize the expert");
  }
  const Eigen::MatrixXd Ks = kernel_matrix(expert.data().X, X_test, hp);
  Prediction out;
  out.mean = Ks.transpose() * expert.alpha();
  const Eigen::MatrixXd V = expert.cholesky().matrixL().solve(Ks);
  out.variance = (kernel_diagonal(X_test, hp).array() + hp.noise_variance -
                  V.colwise().squaredNorm().transpose().array())
                     .max(hp.noise_variance)
                     .matrix();
  return out;
}

}  // namespace dgp
