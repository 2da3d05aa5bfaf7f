#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "dgp/aggregation.hpp"
#include "dgp/errors.hpp"
#include "test_util.hpp"

using namespace dgp;
using testutil::max_abs_diff;

namespace {

ExpertPredictions random_preds(std::mt19937_64& rng, Eigen::Index nt, Eigen::Index M) {
  ExpertPredictions p;
  p.means = testutil::random_matrix(rng, nt, M, -2, 2);
  p.variances = testutil::random_matrix(rng, nt, M, 0.05, 0.9);
  p.prior_variance = Eigen::VectorXd::Constant(nt, 1.1);
  return p;
}

ExpertPredictions one_point(std::vector<double> means, std::vector<double> vars, double prior) {
  ExpertPredictions p;
  const auto M = static_cast<Eigen::Index>(means.size());
  p.means = Eigen::Map<Eigen::RowVectorXd>(means.data(), M);
  p.variances = Eigen::Map<Eigen::RowVectorXd>(vars.data(), M);
  p.prior_variance = Eigen::VectorXd::Constant(1, prior);
  return p;
}

double log_normal(double y, double m, double v) {
  return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * (y - m) * (y - m) / v;
}

/// Recovers (mean, variance) of an unnormalized Gaussian log-density from a
/// quadratic fit through three abscissae.
std::pair<double, double> quadratic_fit(const std::function<double(double)>& logp, double c) {
  const double h = 0.5;
  const double f0 = logp(c - h), f1 = logp(c), f2 = logp(c + h);
  const double a = (f0 - 2.0 * f1 + f2) / (2.0 * h * h);  // coefficient of y^2
  const double b = (f2 - f0) / (2.0 * h) - 2.0 * a * c;    // coefficient of y
  return {-b / (2.0 * a), -1.0 / (2.0 * a)};
}

Partitioning split(const Dataset& d, int M, std::uint64_t seed) {
  return make_partition(d, M, PartitionMethod::kmeans, seed);
}

Dataset smooth_data(std::mt19937_64& rng, Eigen::Index n) {
  const Eigen::MatrixXd X = testutil::random_matrix(rng, n, 1, 0, 1);
  const Eigen::VectorXd y =
      (7.0 * X.col(0).array()).sin().matrix() + 0.1 * testutil::random_matrix(rng, n, 1);
  return Dataset(X, y);
}

Hyperparameters hp_default() {
  Hyperparameters hp;
  hp.lengthscale = {0.2};
  hp.signal_variance = 1.0;
  hp.noise_variance = 0.01;
  return hp;
}

}  // namespace

TEST_CASE("uniform weights") {
  std::mt19937_64 rng(1);
  const ExpertPredictions p = random_preds(rng, 5, 4);
  CHECK((compute_weights(p, WeightScheme::uniform_inv_M).beta.array() == 0.25).all());
  CHECK((compute_weights(p, WeightScheme::uniform_one).beta.array() == 1.0).all());
}

TEST_CASE("differential-entropy weights") {
  ExpertPredictions p = one_point({0.0, 1.0}, {1.1, 1.1 / std::exp(1.0)}, 1.1);
  const Weights w = compute_weights(p, WeightScheme::diff_entropy);
  CHECK(w.beta(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(w.beta(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("a single expert with unit weight is returned unchanged") {
  std::mt19937_64 rng(2);
  const ExpertPredictions p = random_preds(rng, 10, 1);
  for (bool correction : {false, true}) {
    const AggregatedMoments a =
        poe_family_aggregate(p, compute_weights(p, WeightScheme::uniform_one), correction);
    CHECK(max_abs_diff(a.mean, p.means.col(0)) < 1e-15);
    CHECK(max_abs_diff(a.variance, p.variances.col(0)) < 1e-15);
  }
}

TEST_CASE("identical experts under GPoE give the expert back") {
  std::mt19937_64 rng(3);
  ExpertPredictions p = random_preds(rng, 8, 1);
  p.means = p.means.replicate(1, 5).eval();
  p.variances = p.variances.replicate(1, 5).eval();
  const AggregatedMoments a = gpoe(p);
  CHECK(max_abs_diff(a.mean, p.means.col(0)) < 1e-14);
  CHECK(max_abs_diff(a.variance, p.variances.col(0)) < 1e-14);
}

TEST_CASE("product of two unit Gaussians") {
  const AggregatedMoments a = poe(one_point({1.0, 3.0}, {1.0, 1.0}, 2.0));
  CHECK(a.mean(0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(a.variance(0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("product-family aggregates match the log-density oracle") {
  std::mt19937_64 rng(4);
  const ExpertPredictions p = random_preds(rng, 12, 4);
  for (auto scheme : {WeightScheme::uniform_one, WeightScheme::uniform_inv_M, WeightScheme::diff_entropy}) {
    for (bool correction : {false, true}) {
      const Weights w = compute_weights(p, scheme);
      AggregatedMoments a;
      try {
        a = poe_family_aggregate(p, w, correction);
      } catch (const NumericalError&) {
        continue;  // BCM with unit weights may lose positivity; tested separately
      }
      for (Eigen::Index t = 0; t < p.test_count(); ++t) {
        auto logp = [&](double y) {
          double s = 0.0, bsum = 0.0;
          for (Eigen::Index i = 0; i < p.expert_count(); ++i) {
            s += w.beta(t, i) * log_normal(y, p.means(t, i), p.variances(t, i));
            bsum += w.beta(t, i);
          }
          if (correction) s += (1.0 - bsum) * log_normal(y, 0.0, p.prior_variance(t));
          return s;
        };
        const auto [m, v] = quadratic_fit(logp, 0.0);
        CHECK(a.mean(t) == doctest::Approx(m).epsilon(1e-7));
        CHECK(a.variance(t) == doctest::Approx(v).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("robust BCM with unit weights is BCM bit for bit") {
  std::mt19937_64 rng(5);
  const ExpertPredictions p = random_preds(rng, 20, 2);
  Weights w;
  w.beta = Eigen::MatrixXd::Ones(20, 2);
  w.scheme = WeightScheme::diff_entropy;
  const AggregatedMoments a = poe_family_aggregate(p, w, true);
  const AggregatedMoments b = bcm(p);
  CHECK(a.mean == b.mean);
  CHECK(a.variance == b.variance);
}

TEST_CASE("PoE precision grows with the number of experts") {
  std::mt19937_64 rng(6);
  const ExpertPredictions p = random_preds(rng, 10, 6);
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(10);
  for (Eigen::Index M = 1; M <= 6; ++M) {
    ExpertPredictions q;
    q.means = p.means.leftCols(M);
    q.variances = p.variances.leftCols(M);
    q.prior_variance = p.prior_variance;
    const Eigen::VectorXd prec = poe(q).variance.cwiseInverse();
    CHECK((prec.array() > prev.array()).all());
    prev = prec;
  }
}

TEST_CASE("GPoE variance is at least the smallest expert variance") {
  std::mt19937_64 rng(7);
  const ExpertPredictions p = random_preds(rng, 30, 5);
  const AggregatedMoments a = gpoe(p);
  for (Eigen::Index t = 0; t < 30; ++t) CHECK(a.variance(t) >= p.variances.row(t).minCoeff() - 1e-15);
}

TEST_CASE("aggregators do not depend on expert order") {
  std::mt19937_64 rng(8);
  const ExpertPredictions p = random_preds(rng, 15, 5);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  ExpertPredictions q = p;
  q.means = p.means * perm;
  q.variances = p.variances * perm;
  for (auto f : {&poe, &gpoe, &bcm, &rbcm}) {
    AggregatedMoments a, b;
    try {
      a = f(p);
    } catch (const NumericalError&) {
      CHECK_THROWS_AS(f(q), NumericalError);
      continue;
    }
    b = f(q);
    CHECK(max_abs_diff(a.mean, b.mean) < 1e-12);
    CHECK(max_abs_diff(a.variance, b.variance) < 1e-12);
  }
}

TEST_CASE("non-positive aggregated precision names the test index") {
  // At test point 2 the experts are less certain than the prior, so the
  // prior correction drives the precision negative.
  ExpertPredictions p;
  p.means = Eigen::MatrixXd::Zero(3, 3);
  p.variances = Eigen::MatrixXd::Constant(3, 3, 1.0);
  p.variances(2, 0) = p.variances(2, 1) = p.variances(2, 2) = 2.9;
  p.prior_variance = Eigen::VectorXd::Constant(3, 1.0);
  p.prior_variance(2) = 1.4;
  try {
    bcm(p);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("test index 2") != std::string::npos);
  }
}

TEST_CASE("malformed expert predictions are argument errors") {
  std::mt19937_64 rng(9);
  ExpertPredictions p = random_preds(rng, 4, 2);
  p.variances(1, 1) = 0.0;
  CHECK_THROWS_AS(poe(p), ArgumentError);
  ExpertPredictions q = random_preds(rng, 4, 2);
  Weights w;
  w.beta = Eigen::MatrixXd::Ones(4, 3);
  CHECK_THROWS_AS(poe_family_aggregate(q, w, false), ArgumentError);
}

TEST_CASE("GRBCM combine with identical experts returns that expert") {
  std::mt19937_64 rng(10);
  const ExpertPredictions one = random_preds(rng, 9, 1);
  Prediction base{one.means.col(0), one.variances.col(0)};
  ExpertPredictions aug;
  aug.means = one.means.replicate(1, 4).eval();
  aug.variances = one.variances.replicate(1, 4).eval();
  aug.prior_variance = one.prior_variance;
  const AggregatedMoments a = grbcm_combine(base, aug);
  CHECK(max_abs_diff(a.mean, base.mean) < 1e-14);
  CHECK(max_abs_diff(a.variance, base.variance) < 1e-14);
}

TEST_CASE("GRBCM with two partitions equals the full GP") {
  std::mt19937_64 rng(11);
  const Dataset d = smooth_data(rng, 120);
  const Hyperparameters hp = hp_default();
  const Eigen::MatrixXd Xs = testutil::random_matrix(rng, 25, 1, -0.2, 1.2);
  const Prediction full = predict(TrainedExpert(d, hp), Xs, hp);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const GrbcmResult g = grbcm_aggregate(split(d, 2, seed), hp, Xs, seed);
    CHECK(max_abs_diff(g.moments.mean, full.mean) < 1e-8);
    CHECK(max_abs_diff(g.moments.variance, full.variance) < 1e-8);
  }
}

TEST_CASE("GRBCM with three partitions matches the log-density oracle") {
  std::mt19937_64 rng(12);
  const Dataset d = smooth_data(rng, 150);
  const Hyperparameters hp = hp_default();
  const Eigen::MatrixXd Xs = testutil::random_matrix(rng, 20, 1, -0.2, 1.2);
  const Partitioning parts = split(d, 3, 4);
  const GrbcmResult g = grbcm_aggregate(parts, hp, Xs, 4);

  // Independent transcription with dense-inverse experts.
  const Dataset& base = parts.subsets[static_cast<std::size_t>(g.base_index)];
  const auto [mb, vb] = testutil::dense_predict(base, Xs, hp);
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> aug;
  for (int i = 0; i < 3; ++i)
    if (i != g.base_index)
      aug.push_back(testutil::dense_predict(concatenate(base, parts.subsets[static_cast<std::size_t>(i)]), Xs, hp));
  for (Eigen::Index t = 0; t < Xs.rows(); ++t) {
    auto logp = [&](double y) {
      double s = 0.0, bsum = 0.0;
      for (std::size_t j = 0; j < aug.size(); ++j) {
        const double beta = j == 0 ? 1.0 : 0.5 * (std::log(vb(t)) - std::log(aug[j].second(t)));
        s += beta * log_normal(y, aug[j].first(t), aug[j].second(t));
        bsum += beta;
      }
      return s + (1.0 - bsum) * log_normal(y, mb(t), vb(t));
    };
    const auto [m, v] = quadratic_fit(logp, mb(t));
    CHECK(g.moments.mean(t) == doctest::Approx(m).epsilon(1e-6));
    CHECK(g.moments.variance(t) == doctest::Approx(v).epsilon(1e-6));
  }
}

TEST_CASE("GRBCM base choice is seeded and M < 2 is rejected") {
  std::mt19937_64 rng(13);
  const Dataset d = smooth_data(rng, 60);
  const Hyperparameters hp = hp_default();
  const Eigen::MatrixXd Xs = testutil::random_matrix(rng, 5, 1);
  const Partitioning parts = split(d, 4, 0);
  CHECK(grbcm_aggregate(parts, hp, Xs, 3).base_index == grbcm_aggregate(parts, hp, Xs, 3).base_index);
  CHECK_THROWS_AS(grbcm_aggregate(split(d, 1, 0), hp, Xs, 0), ArgumentError);
}

TEST_CASE("predict_experts stacks per-expert predictions") {
  std::mt19937_64 rng(14);
  const Dataset d = smooth_data(rng, 80);
  const Hyperparameters hp = hp_default();
  const Partitioning parts = split(d, 3, 0);
  const auto experts = train_experts(parts.subsets, hp);
  const Eigen::MatrixXd Xs = testutil::random_matrix(rng, 7, 1);
  const ExpertPredictions p = predict_experts(experts, Xs, hp);
  for (int i = 0; i < 3; ++i) {
    const Prediction q = predict(experts[static_cast<std::size_t>(i)], Xs, hp);
    CHECK(p.means.col(i) == q.mean);
    CHECK(p.variances.col(i) == q.variance);
  }
  CHECK((p.prior_variance.array() == hp.signal_variance + hp.noise_variance).all());
}
