#pragma once

#include <cstdint>
#include <vector>

#include "dgp/gp.hpp"
#include "dgp/partition.hpp"

namespace dgp {

/// Per-expert predictive moments at n_t test points (one column per expert).
struct ExpertPredictions {
  Eigen::MatrixXd means;           // n_t x M
  Eigen::MatrixXd variances;       // n_t x M, strictly positive
  Eigen::VectorXd prior_variance;  // n_t, k(x*,x*) + sn^2

  Eigen::Index test_count() const { return means.rows(); }
  Eigen::Index expert_count() const { return means.cols(); }

  /// Throws ArgumentError on shape mismatch or non-positive variances.
  void validate() const;
};

/// Trains one expert per subset (shared hyperparameters).
std::vector<TrainedExpert> train_experts(const std::vector<Dataset>& subsets,
                                         const Hyperparameters& hp);

/// Stacks predict() of every expert at X_test.
ExpertPredictions predict_experts(const std::vector<TrainedExpert>& experts,
                                  const Eigen::MatrixXd& X_test, const Hyperparameters& hp);

enum class WeightScheme { uniform_one, uniform_inv_M, diff_entropy };

struct Weights {
  Eigen::MatrixXd beta;  // n_t x M
  WeightScheme scheme = WeightScheme::uniform_one;
};

/// uniform_one: 1; uniform_inv_M: 1/M;
/// diff_entropy: 1/2 (log prior_var - log var_i) per test point.
Weights compute_weights(const ExpertPredictions& preds, WeightScheme scheme);

struct AggregatedMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Weighted product of Gaussian experts. Precision is sum_i beta_i / var_i,
/// plus (1 - sum_i beta_i) / prior_var when `use_prior_correction` is set
/// (the Bayesian committee machine family).
AggregatedMoments poe_family_aggregate(const ExpertPredictions& preds, const Weights& weights,
                                       bool use_prior_correction);

AggregatedMoments poe(const ExpertPredictions& preds);
/// Generalized PoE with uniform beta = 1/M.
AggregatedMoments gpoe(const ExpertPredictions& preds);
AggregatedMoments bcm(const ExpertPredictions& preds);
/// Robust BCM with differential-entropy weights.
AggregatedMoments rbcm(const ExpertPredictions& preds);

/// Combination step of the generalized robust BCM. `base` is the global
/// expert; column j of `augmented` is the expert trained on base + subset j,
/// in the order the subsets are visited. The first augmented expert gets
/// weight 1, the rest 1/2 (log var_b - log var_bj).
AggregatedMoments grbcm_combine(const Prediction& base, const ExpertPredictions& augmented);

struct GrbcmResult {
  AggregatedMoments moments;
  int base_index = 0;
  /// Largest covariance matrix factorized (bytes).
  std::size_t peak_matrix_bytes = 0;
};

/// Generalized robust BCM: picks the base subset with `seed`, trains the base
/// expert and M-1 experts on base + subset_i, then combines.
GrbcmResult grbcm_aggregate(const Partitioning& partitions, const Hyperparameters& hp,
                            const Eigen::MatrixXd& X_test, std::uint64_t seed);

}  // namespace dgp
