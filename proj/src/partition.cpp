#include "dgp/partition.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "dgp/errors.hpp"

namespace dgp {

namespace {

constexpr int kMaxLloydIterations = 100;

void check_count(const Dataset& data, int M) {
  if (M < 1 || M > data.size()) {
    std::ostringstream msg;
    msg << "expert count " << M << " must lie in [1, " << data.size() << "]";
    throw ArgumentError(msg.str());
  }
}

double sq_dist(const Eigen::MatrixXd& X, Eigen::Index row, const Eigen::MatrixXd& C,
               Eigen::Index c) {
  return (X.row(row) - C.row(c)).squaredNorm();
}

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& X, int M, std::mt19937_64& rng) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd centers(M, X.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = X.row(pick(rng));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = sq_dist(X, i, centers, 0);
  for (int c = 1; c < M; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target <= 0.0 && d2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);  // all points coincide with existing centers
    }
    centers.row(c) = X.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), sq_dist(X, i, centers, c));
  }
  return centers;
}

}  // namespace

Partitioning partition_from_assignments(const Dataset& data, std::vector<int> assignments,
                                        int M, PartitionMethod method) {
  if (static_cast<Eigen::Index>(assignments.size()) != data.size())
    throw ArgumentError("assignment vector length differs from dataset size");
  Partitioning out;
  out.method = method;
  out.rows.resize(static_cast<std::size_t>(M));
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int a = assignments[i];
    if (a < 0 || a >= M) throw ArgumentError("assignment out of range");
    out.rows[static_cast<std::size_t>(a)].push_back(static_cast<Eigen::Index>(i));
  }
  for (const auto& r : out.rows) {
    if (r.empty()) throw ArgumentError("partition produced an empty subset");
    out.subsets.push_back(data.select(r));
  }
  out.assignments = std::move(assignments);
  return out;
}

Partitioning kmeans_partition(const Dataset& data, int M, std::uint64_t seed) {
  check_count(data, M);
  const Eigen::MatrixXd& X = data.X;
  const Eigen::Index n = X.rows();
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers = kmeanspp_seed(X, M, rng);

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<double> trace;
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < M; ++c) {
        const double d = sq_dist(X, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }

    // Repair empty clusters.
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(M), 0);
    for (int a : assign) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < M; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      const auto largest = static_cast<int>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] != largest) continue;
        const double d = sq_dist(X, i, centers, largest);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      assign[static_cast<std::size_t>(far)] = c;
      --sizes[static_cast<std::size_t>(largest)];
      ++sizes[static_cast<std::size_t>(c)];
      changed = true;
    }

    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centers.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
    for (int c = 0; c < M; ++c) centers.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);

    double wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) wcss += sq_dist(X, i, centers, assign[static_cast<std::size_t>(i)]);
    trace.push_back(wcss);
    if (!changed) break;
  }

  Partitioning out = partition_from_assignments(data, std::move(assign), M, PartitionMethod::kmeans);
  out.objective_trace = std::move(trace);
  return out;
}

Partitioning random_partition(const Dataset& data, int M, std::uint64_t seed) {
  check_count(data, M);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> assign(order.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    assign[static_cast<std::size_t>(order[k])] = static_cast<int>(k % static_cast<std::size_t>(M));
  return partition_from_assignments(data, std::move(assign), M, PartitionMethod::random);
}

Partitioning make_partition(const Dataset& data, int M, PartitionMethod method,
                            std::uint64_t seed) {
  return method == PartitionMethod::kmeans ? kmeans_partition(data, M, seed)
                                           : random_partition(data, M, seed);
}

}  // namespace dgp
