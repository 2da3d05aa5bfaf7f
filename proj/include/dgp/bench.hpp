#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dgp/emggm.hpp"
#include "dgp/gp.hpp"
#include "dgp/partition.hpp"

namespace dgp::bench {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// f(x) = 5x^2 sin(12x) + (x^3 - 0.5) sin(3x - 0.5) + 4 cos(2x)
double synthetic_function(double x);

/// x ~ U(range), y = f(x) + N(0, noise_sd^2). Deterministic per seed.
Dataset generate_synthetic(Eigen::Index n, Interval range, double noise_sd, std::uint64_t seed);

struct NormalizedData {
  Dataset train;
  Dataset test;
  NormalizationState state;
};

/// Standardizes x (per column) and y with training statistics and applies the
/// same map to the test set. Throws ArgumentError on zero variance.
NormalizedData normalize(const Dataset& train, const Dataset& test);

/// Maps normalized targets back to original units.
Eigen::VectorXd denormalize_targets(const Eigen::VectorXd& y, const NormalizationState& state);
/// Inverse of the normalization recorded in `data.normalization`.
Dataset denormalize(const Dataset& data);

struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

ErrorMetrics metrics(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

enum class Method { full_gp, poe, gpoe, bcm, rbcm, grbcm, npae, emggm };

std::string to_string(Method m);
Method method_from_string(const std::string& name);
std::vector<Method> all_methods();
/// Parses "gpoe,rbcm,emggm".
std::vector<Method> parse_method_list(const std::string& csv);

struct BenchmarkConfig {
  Eigen::Index n = 2000;
  Eigen::Index n_t = 200;
  Interval train_range{0.0, 1.0};
  Interval test_range{-0.2, 1.2};
  double noise_sd = 0.2;
  std::vector<int> M_list{5, 10};
  std::vector<Method> methods = all_methods();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  PartitionMethod partitioner = PartitionMethod::kmeans;
  EmggmConfig emggm;
  std::filesystem::path output_dir = "bench_out";

  /// Hyperparameter optimizer used for the shared expert fit.
  OptimizerSettings optimizer;
  /// The full GP fits its own hyperparameters on at most this many rows
  /// (a seeded subset), then conditions on all training data.
  Eigen::Index full_gp_fit_max_n = 500;
  /// When false every time column is written as 0, which makes the CSV a
  /// pure function of the configuration.
  bool record_timings = true;
  bool write_svg = true;

  /// The published experiment size: n = 10^4, n_t = 10^3, M in {10,20,30,40}.
  void apply_full_scale();
  void validate() const;
};

struct BenchmarkRow {
  std::string method;
  int M = 0;
  std::uint64_t seed = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double train_time_s = 0.0;
  double predict_time_s = 0.0;
  std::size_t peak_matrix_bytes = 0;
  /// Empty unless the method failed; failed rows carry NaN metrics.
  std::string error;

  friend bool operator==(const BenchmarkRow&, const BenchmarkRow&) = default;
};

struct EmggmRunTrace {
  int M = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  bool converged = false;
  std::vector<EmIteration> iterations;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<EmggmRunTrace> emggm_traces;
};

/// For every (M, seed): generate, normalize, partition, fit shared
/// hyperparameters, predict with each expert, aggregate with every requested
/// method. A failing method yields a row with `error` set; the run continues.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg);

/// Writes results.csv, emggm_trace.json and (optionally) the SVG charts into
/// cfg.output_dir. Returns the CSV path.
std::filesystem::path write_outputs(const BenchmarkConfig& cfg, const BenchmarkResult& result);

inline constexpr const char* kCsvHeader =
    "method,M,seed,mae,rmse,train_time_s,predict_time_s,peak_matrix_bytes";

void write_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);
std::vector<BenchmarkRow> read_csv(std::istream& in);

/// Dataset CSV: header "x,y" (or x0..x{d-1},y for d > 1).
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);

/// Line chart (one polyline per method) of the median over seeds versus M.
enum class ChartMetric { mae, rmse, log10_predict_time };
std::string render_svg_chart(const std::vector<BenchmarkRow>& rows, ChartMetric metric);

}  // namespace dgp::bench
