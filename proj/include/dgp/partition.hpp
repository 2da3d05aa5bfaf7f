#pragma once

#include <cstdint>
#include <vector>

#include "dgp/gp.hpp"

namespace dgp {

enum class PartitionMethod { kmeans, random };

/// Disjoint split of a dataset into M non-empty expert subsets.
struct Partitioning {
  std::vector<int> assignments;                  // expert index per input row
  std::vector<std::vector<Eigen::Index>> rows;   // input rows of each subset
  std::vector<Dataset> subsets;
  PartitionMethod method = PartitionMethod::random;
  /// Within-cluster sum of squares after each Lloyd iteration (k-means only).
  std::vector<double> objective_trace;

  int count() const { return static_cast<int>(subsets.size()); }
};

/// Lloyd's algorithm on the inputs (targets are ignored) with k-means++
/// seeding. Stops when assignments are stable or after 100 iterations. An
/// empty cluster takes the point of the largest cluster farthest from that
/// cluster's centroid.
Partitioning kmeans_partition(const Dataset& data, int M, std::uint64_t seed);

/// Shuffled round-robin split; sizes differ by at most one.
Partitioning random_partition(const Dataset& data, int M, std::uint64_t seed);

Partitioning make_partition(const Dataset& data, int M, PartitionMethod method,
                            std::uint64_t seed);

/// Rebuilds rows/subsets from an assignment vector.
Partitioning partition_from_assignments(const Dataset& data, std::vector<int> assignments,
                                        int M, PartitionMethod method);

}  // namespace dgp
