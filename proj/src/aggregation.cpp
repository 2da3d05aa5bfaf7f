#include "dgp/aggregation.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "dgp/errors.hpp"

namespace dgp {

void ExpertPredictions::validate() const {
  if (means.rows() != variances.rows() || means.cols() != variances.cols() ||
      prior_variance.size() != means.rows()) {
    throw ArgumentError("expert prediction shapes are inconsistent");
  }
  if (means.cols() < 1) throw ArgumentError("need at least one expert");
  if (!(variances.array() > 0.0).all() || !(prior_variance.array() > 0.0).all())
    throw ArgumentError("expert variances must be strictly positive");
}

std::vector<TrainedExpert> train_experts(const std::vector<Dataset>& subsets,
                                         const Hyperparameters& hp) {
  std::vector<TrainedExpert> experts;
  experts.reserve(subsets.size());
  for (const Dataset& d : subsets) experts.emplace_back(d, hp);
  return experts;
}

ExpertPredictions predict_experts(const std::vector<TrainedExpert>& experts,
                                  const Eigen::MatrixXd& X_test, const Hyperparameters& hp) {
  if (experts.empty()) throw ArgumentError("need at least one expert");
  const auto M = static_cast<Eigen::Index>(experts.size());
  ExpertPredictions out;
  out.means.resize(X_test.rows(), M);
  out.variances.resize(X_test.rows(), M);
  for (Eigen::Index i = 0; i < M; ++i) {
    const Prediction p = predict(experts[static_cast<std::size_t>(i)], X_test, hp);
    out.means.col(i) = p.mean;
    out.variances.col(i) = p.variance;
  }
  out.prior_variance = kernel_diagonal(X_test, hp).array() + hp.noise_variance;
  return out;
}

Weights compute_weights(const ExpertPredictions& preds, WeightScheme scheme) {
  preds.validate();
  const Eigen::Index nt = preds.test_count();
  const Eigen::Index M = preds.expert_count();
  Weights w;
  w.scheme = scheme;
  switch (scheme) {
    case WeightScheme::uniform_one:
      w.beta = Eigen::MatrixXd::Ones(nt, M);
      break;
    case WeightScheme::uniform_inv_M:
      w.beta = Eigen::MatrixXd::Constant(nt, M, 1.0 / static_cast<double>(M));
      break;
    case WeightScheme::diff_entropy:
      w.beta = 0.5 * ((-preds.variances.array().log()).colwise() +
                      preds.prior_variance.array().log())
                         .matrix();
      break;
  }
  return w;
}

AggregatedMoments poe_family_aggregate(const ExpertPredictions& preds, const Weights& weights,
                                       bool use_prior_correction) {
  preds.validate();
  if (weights.beta.rows() != preds.test_count() || weights.beta.cols() != preds.expert_count())
    throw ArgumentError("weight matrix shape does not match expert predictions");

  const Eigen::Index nt = preds.test_count();
  const Eigen::Index M = preds.expert_count();
  AggregatedMoments out;
  out.mean.resize(nt);
  out.variance.resize(nt);
  for (Eigen::Index t = 0; t < nt; ++t) {
    double precision = 0.0;
    double weighted = 0.0;
    double beta_sum = 0.0;
    for (Eigen::Index i = 0; i < M; ++i) {
      const double b = weights.beta(t, i);
      const double p = 1.0 / preds.variances(t, i);
      precision += b * p;
      weighted += b * p * preds.means(t, i);
      beta_sum += b;
    }
    if (use_prior_correction) precision += (1.0 - beta_sum) / preds.prior_variance(t);
    if (!(precision > 0.0) || !std::isfinite(precision)) {
      std::ostringstream msg;
      msg << "aggregated precision " << precision << " is not positive at test index " << t;
      throw NumericalError(msg.str());
    }
    out.variance(t) = 1.0 / precision;
    out.mean(t) = weighted / precision;
  }
  return out;
}

AggregatedMoments poe(const ExpertPredictions& preds) {
  return poe_family_aggregate(preds, compute_weights(preds, WeightScheme::uniform_one), false);
}

AggregatedMoments gpoe(const ExpertPredictions& preds) {
  return poe_family_aggregate(preds, compute_weights(preds, WeightScheme::uniform_inv_M), false);
}

AggregatedMoments bcm(const ExpertPredictions& preds) {
  return poe_family_aggregate(preds, compute_weights(preds, WeightScheme::uniform_one), true);
}

AggregatedMoments rbcm(const ExpertPredictions& preds) {
  return poe_family_aggregate(preds, compute_weights(preds, WeightScheme::diff_entropy), true);
}

AggregatedMoments grbcm_combine(const Prediction& base, const ExpertPredictions& augmented) {
  augmented.validate();
  const Eigen::Index nt = augmented.test_count();
  const Eigen::Index K = augmented.expert_count();
  if (base.mean.size() != nt || base.variance.size() != nt)
    throw ArgumentError("base prediction length does not match augmented predictions");
  if (!(base.variance.array() > 0.0).all()) throw ArgumentError("base variance must be positive");

  AggregatedMoments out;
  out.mean.resize(nt);
  out.variance.resize(nt);
  for (Eigen::Index t = 0; t < nt; ++t) {
    const double base_var = base.variance(t);
    double precision = 0.0;
    double weighted = 0.0;
    double beta_sum = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) {
      const double v = augmented.variances(t, j);
      const double b = j == 0 ? 1.0 : 0.5 * (std::log(base_var) - std::log(v));
      precision += b / v;
      weighted += b / v * augmented.means(t, j);
      beta_sum += b;
    }
    precision += (1.0 - beta_sum) / base_var;
    weighted += (1.0 - beta_sum) / base_var * base.mean(t);
    if (!(precision > 0.0) || !std::isfinite(precision)) {
      std::ostringstream msg;
      msg << "GRBCM precision " << precision << " is not positive at test index " << t;
      throw NumericalError(msg.str());
    }
    out.variance(t) = 1.0 / precision;
    out.mean(t) = weighted / precision;
  }
  return out;
}

GrbcmResult grbcm_aggregate(const Partitioning& partitions, const Hyperparameters& hp,
                            const Eigen::MatrixXd& X_test, std::uint64_t seed) {
  const int M = partitions.count();
  if (M < 2) throw ArgumentError("GRBCM needs at least two partitions");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, M - 1);

  GrbcmResult result;
  result.base_index = pick(rng);
  const Dataset& base_data = partitions.subsets[static_cast<std::size_t>(result.base_index)];
  const TrainedExpert base(base_data, hp);
  const Prediction base_pred = predict(base, X_test, hp);
  auto bytes = [](Eigen::Index n) { return static_cast<std::size_t>(n * n) * sizeof(double); };
  result.peak_matrix_bytes = bytes(base_data.size());

  ExpertPredictions augmented;
  augmented.means.resize(X_test.rows(), M - 1);
  augmented.variances.resize(X_test.rows(), M - 1);
  augmented.prior_variance = kernel_diagonal(X_test, hp).array() + hp.noise_variance;
  Eigen::Index col = 0;
  for (int i = 0; i < M; ++i) {
    if (i == result.base_index) continue;
    Dataset merged = concatenate(base_data, partitions.subsets[static_cast<std::size_t>(i)]);
    result.peak_matrix_bytes = std::max(result.peak_matrix_bytes, bytes(merged.size()));
    const TrainedExpert expert(std::move(merged), hp);
    const Prediction p = predict(expert, X_test, hp);
    augmented.means.col(col) = p.mean;
    augmented.variances.col(col) = p.variance;
    ++col;
  }
  result.moments = grbcm_combine(base_pred, augmented);
  return result;
}

}  // namespace dgp
