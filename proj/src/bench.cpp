#include "dgp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dgp/aggregation.hpp"
#include "dgp/errors.hpp"
#include "dgp/npae.hpp"
#include "dgp/serialization.hpp"

namespace dgp::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr std::uint64_t kTestSeedOffset = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kFullGpSubsetOffset = 0xD1B54A32D192ED03ull;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw ArgumentError("malformed number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

}  // namespace

double synthetic_function(double x) {
  return 5.0 * x * x * std::sin(12.0 * x) + (x * x * x - 0.5) * std::sin(3.0 * x - 0.5) +
         4.0 * std::cos(2.0 * x);
}

Dataset generate_synthetic(Eigen::Index n, Interval range, double noise_sd, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("generate_synthetic needs n >= 1");
  if (!(range.lo < range.hi)) throw ArgumentError("range must satisfy lo < hi");
  if (!(noise_sd >= 0.0)) throw ArgumentError("noise_sd must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(range.lo, range.hi);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = ux(rng);
    const double eps = noise(rng);
    y(i) = synthetic_function(X(i, 0)) + noise_sd * eps;
  }
  return Dataset(std::move(X), std::move(y));
}

NormalizedData normalize(const Dataset& train, const Dataset& test) {
  if (train.empty()) throw ArgumentError("cannot normalize an empty training set");
  if (test.dim() != train.dim() && !test.empty())
    throw ArgumentError("train and test input dimensions differ");
  const double n = static_cast<double>(train.size());
  NormalizationState st;
  st.applied = true;
  st.x_offset = train.X.colwise().mean();
  st.x_scale = ((train.X.rowwise() - st.x_offset).array().square().colwise().sum() / n).sqrt();
  st.y_offset = train.y.mean();
  st.y_scale = std::sqrt((train.y.array() - st.y_offset).square().sum() / n);
  if (!(st.y_scale > 0.0) || !(st.x_scale.array() > 0.0).all())
    throw ArgumentError("cannot normalize: zero variance in inputs or targets");

  auto apply = [&](const Dataset& d) {
    Dataset out;
    out.X = (d.X.rowwise() - st.x_offset).array().rowwise() / st.x_scale.array();
    out.y = (d.y.array() - st.y_offset) / st.y_scale;
    out.normalization = st;
    return out;
  };
  return NormalizedData{apply(train), apply(test), st};
}

Eigen::VectorXd denormalize_targets(const Eigen::VectorXd& y, const NormalizationState& st) {
  if (!st.applied) return y;
  return (y.array() * st.y_scale + st.y_offset).matrix();
}

Dataset denormalize(const Dataset& data) {
  const NormalizationState& st = data.normalization;
  if (!st.applied) return data;
  Dataset out;
  out.X = (data.X.array().rowwise() * st.x_scale.array()).rowwise() + st.x_offset.array();
  out.y = denormalize_targets(data.y, st);
  return out;
}

ErrorMetrics metrics(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size()) throw ArgumentError("metrics: length mismatch");
  if (pred.size() == 0) throw ArgumentError("metrics: empty input");
  const Eigen::ArrayXd d = (pred - truth).array();
  return ErrorMetrics{d.abs().mean(), std::sqrt(d.square().mean())};
}

std::string to_string(Method m) {
  switch (m) {
    case Method::full_gp: return "full_gp";
    case Method::poe: return "poe";
    case Method::gpoe: return "gpoe";
    case Method::bcm: return "bcm";
    case Method::rbcm: return "rbcm";
    case Method::grbcm: return "grbcm";
    case Method::npae: return "npae";
    case Method::emggm: return "emggm";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  for (Method m : all_methods())
    if (to_string(m) == name) return m;
  throw ArgumentError("unknown method '" + name + "'");
}

std::vector<Method> all_methods() {
  return {Method::full_gp, Method::poe,   Method::gpoe, Method::bcm,
          Method::rbcm,    Method::grbcm, Method::npae, Method::emggm};
}

std::vector<Method> parse_method_list(const std::string& csv) {
  std::vector<Method> out;
  for (const std::string& tok : split(csv, ',')) {
    const std::string t = trim(tok);
    if (!t.empty()) out.push_back(method_from_string(t));
  }
  if (out.empty()) throw ArgumentError("method list is empty");
  return out;
}

void BenchmarkConfig::apply_full_scale() {
  n = 10000;
  n_t = 1000;
  M_list = {10, 20, 30, 40};
}

void BenchmarkConfig::validate() const {
  if (n < 1 || n_t < 1) throw ArgumentError("n and n_t must be at least 1");
  if (!(train_range.lo < train_range.hi) || !(test_range.lo < test_range.hi))
    throw ArgumentError("ranges must satisfy lo < hi");
  if (methods.empty()) throw ArgumentError("at least one method is required");
  if (M_list.empty() || seeds.empty()) throw ArgumentError("M_list and seeds must be non-empty");
  for (int M : M_list)
    if (M < 1 || M > n) throw ArgumentError("every M must lie in [1, n]");
  if (!(noise_sd >= 0.0)) throw ArgumentError("noise_sd must be non-negative");
  emggm.validate();
}

namespace {

struct SeedData {
  NormalizedData data;
  Eigen::VectorXd truth;  // noise-free test targets, original units
};

SeedData make_seed_data(const BenchmarkConfig& cfg, std::uint64_t seed) {
  const Dataset train = generate_synthetic(cfg.n, cfg.train_range, cfg.noise_sd, seed);
  const Dataset test = generate_synthetic(cfg.n_t, cfg.test_range, 0.0, seed ^ kTestSeedOffset);
  return SeedData{normalize(train, test), test.y};
}

Hyperparameters default_init(Eigen::Index) {
  Hyperparameters hp;
  hp.lengthscale = {1.0};
  hp.signal_variance = 1.0;
  hp.noise_variance = 0.1;
  return hp;
}

BenchmarkRow full_gp_row(const BenchmarkConfig& cfg, const SeedData& sd, std::uint64_t seed) {
  BenchmarkRow row;
  row.method = to_string(Method::full_gp);
  row.seed = seed;
  try {
    const auto t0 = Clock::now();
    const Dataset& train = sd.data.train;
    std::vector<Dataset> fit_set;
    if (train.size() > cfg.full_gp_fit_max_n) {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(train.size()));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      std::mt19937_64 rng(seed ^ kFullGpSubsetOffset);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(cfg.full_gp_fit_max_n));
      fit_set.push_back(train.select(idx));
    } else {
      fit_set.push_back(train);
    }
    OptimizerSettings opts = cfg.optimizer;
    opts.seed = seed;
    const Hyperparameters hp =
        fit_shared_hyperparameters(fit_set, default_init(train.dim()), opts).hyperparameters;
    const TrainedExpert gp(train, hp);
    row.train_time_s = seconds_since(t0);
    const auto t1 = Clock::now();
    const Prediction p = predict(gp, sd.data.test.X, hp);
    row.predict_time_s = seconds_since(t1);
    const ErrorMetrics m = metrics(denormalize_targets(p.mean, sd.data.state), sd.truth);
    row.mae = m.mae;
    row.rmse = m.rmse;
    row.peak_matrix_bytes = static_cast<std::size_t>(train.size() * train.size()) * sizeof(double);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.mae = row.rmse = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  BenchmarkResult result;
  auto wants = [&](Method m) {
    return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
  };

  for (std::uint64_t seed : cfg.seeds) {
    const SeedData sd = make_seed_data(cfg, seed);
    const Dataset& train = sd.data.train;
    const Eigen::MatrixXd& X_test = sd.data.test.X;

    std::optional<BenchmarkRow> full_gp;
    if (wants(Method::full_gp)) full_gp = full_gp_row(cfg, sd, seed);

    for (int M : cfg.M_list) {
      std::vector<BenchmarkRow> cell;
      auto finish = [&](BenchmarkRow row, const Eigen::VectorXd* pred_normalized) {
        row.M = M;
        row.seed = seed;
        if (pred_normalized != nullptr && row.error.empty()) {
          const ErrorMetrics m =
              metrics(denormalize_targets(*pred_normalized, sd.data.state), sd.truth);
          row.mae = m.mae;
          row.rmse = m.rmse;
        }
        cell.push_back(std::move(row));
      };
      auto failed = [&](Method method, const std::string& what) {
        BenchmarkRow row;
        row.method = to_string(method);
        row.error = what;
        row.mae = row.rmse = std::numeric_limits<double>::quiet_NaN();
        finish(std::move(row), nullptr);
      };

      if (full_gp) {
        BenchmarkRow row = *full_gp;
        row.M = M;
        cell.push_back(row);
      }

      // Shared training: partition, fit, factorize, predict.
      std::optional<Partitioning> parts;
      std::vector<TrainedExpert> experts;
      ExpertPredictions preds;
      Hyperparameters hp;
      double train_time = 0.0;
      std::size_t expert_bytes = 0;
      std::string shared_error;
      try {
        const auto t0 = Clock::now();
        parts = make_partition(train, M, cfg.partitioner, seed);
        OptimizerSettings opts = cfg.optimizer;
        opts.seed = seed;
        hp = fit_shared_hyperparameters(parts->subsets, default_init(train.dim()), opts)
                 .hyperparameters;
        experts = train_experts(parts->subsets, hp);
        for (const Dataset& s : parts->subsets)
          expert_bytes = std::max(expert_bytes,
                                  static_cast<std::size_t>(s.size() * s.size()) * sizeof(double));
        preds = predict_experts(experts, X_test, hp);
        train_time = seconds_since(t0);
      } catch (const std::exception& e) {
        shared_error = e.what();
      }

      const std::size_t preds_bytes =
          static_cast<std::size_t>(X_test.rows() * M) * sizeof(double);
      for (Method method : cfg.methods) {
        if (method == Method::full_gp) continue;
        if (!shared_error.empty()) {
          failed(method, "shared training failed: " + shared_error);
          continue;
        }
        BenchmarkRow row;
        row.method = to_string(method);
        row.train_time_s = train_time;
        try {
          const auto t0 = Clock::now();
          Eigen::VectorXd pred;
          switch (method) {
            case Method::poe: pred = poe(preds).mean; break;
            case Method::gpoe: pred = gpoe(preds).mean; break;
            case Method::bcm: pred = bcm(preds).mean; break;
            case Method::rbcm: pred = rbcm(preds).mean; break;
            case Method::grbcm: {
              const GrbcmResult g = grbcm_aggregate(*parts, hp, X_test, seed);
              pred = g.moments.mean;
              row.peak_matrix_bytes = g.peak_matrix_bytes;
              break;
            }
            case Method::npae: {
              const NpaeResult r = npae_aggregate(experts, hp, X_test);
              pred = r.mean;
              row.peak_matrix_bytes = r.peak_matrix_bytes;
              break;
            }
            case Method::emggm: {
              const EmggmResult r = emggm_aggregate(preds, cfg.emggm);
              pred = r.mean;
              row.peak_matrix_bytes = std::max(expert_bytes, r.peak_matrix_bytes);
              result.emggm_traces.push_back(
                  EmggmRunTrace{M, seed, r.lambda, r.converged, r.trace});
              break;
            }
            case Method::full_gp: break;
          }
          row.predict_time_s = seconds_since(t0);
          if (method != Method::grbcm && method != Method::npae) {
            row.peak_matrix_bytes = std::max({row.peak_matrix_bytes, expert_bytes, preds_bytes});
          }
          finish(std::move(row), &pred);
        } catch (const std::exception& e) {
          failed(method, e.what());
          cell.back().train_time_s = train_time;
        }
      }

      if (!cfg.record_timings) {
        for (BenchmarkRow& r : cell) r.train_time_s = r.predict_time_s = 0.0;
      }
      for (BenchmarkRow& r : cell) result.rows.push_back(std::move(r));
    }
  }
  if (!cfg.record_timings) {
    for (EmggmRunTrace& t : result.emggm_traces)
      for (EmIteration& it : t.iterations) it.wall_time_s = 0.0;
  }
  return result;
}

void write_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << kCsvHeader << '\n';
  for (const BenchmarkRow& r : rows) {
    out << r.method << ',' << r.M << ',' << r.seed << ',' << format_double(r.mae) << ','
        << format_double(r.rmse) << ',' << format_double(r.train_time_s) << ','
        << format_double(r.predict_time_s) << ',' << r.peak_matrix_bytes << '\n';
  }
}

std::vector<BenchmarkRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCsvHeader)
    throw ArgumentError("benchmark CSV header mismatch");
  std::vector<BenchmarkRow> rows;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw ArgumentError("benchmark CSV row has wrong field count: " + line);
    BenchmarkRow r;
    r.method = f[0];
    r.M = std::stoi(f[1]);
    r.seed = std::stoull(f[2]);
    r.mae = parse_double(f[3]);
    r.rmse = parse_double(f[4]);
    r.train_time_s = parse_double(f[5]);
    r.predict_time_s = parse_double(f[6]);
    r.peak_matrix_bytes = static_cast<std::size_t>(std::stoull(f[7]));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  if (data.dim() == 1) {
    out << "x";
  } else {
    for (Eigen::Index k = 0; k < data.dim(); ++k) out << (k ? "," : "") << 'x' << k;
  }
  out << ",y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index k = 0; k < data.dim(); ++k) out << format_double(data.X(i, k)) << ',';
    out << format_double(data.y(i)) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ArgumentError("dataset CSV is empty");
  const auto header = split(trim(line), ',');
  if (header.size() < 2) throw ArgumentError("dataset CSV needs at least one input column and y");
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (static_cast<Eigen::Index>(f.size()) != d + 1)
      throw ArgumentError("dataset CSV row has wrong field count: " + line);
    std::vector<double> r;
    for (const auto& v : f) r.push_back(parse_double(trim(v)));
    rows.push_back(std::move(r));
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), d);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
    y(static_cast<Eigen::Index>(i)) = rows[i].back();
  }
  return Dataset(std::move(X), std::move(y));
}

std::filesystem::path write_outputs(const BenchmarkConfig& cfg, const BenchmarkResult& result) {
  std::filesystem::create_directories(cfg.output_dir);
  const auto csv_path = cfg.output_dir / "results.csv";
  {
    std::ofstream out(csv_path);
    write_csv(out, result.rows);
  }
  {
    std::ofstream out(cfg.output_dir / "emggm_trace.json");
    out << nlohmann::json(result.emggm_traces).dump(2) << '\n';
  }
  std::ostringstream errors;
  for (const BenchmarkRow& r : result.rows)
    if (!r.error.empty()) errors << r.method << ",M=" << r.M << ",seed=" << r.seed << ": " << r.error << '\n';
  if (!errors.str().empty()) {
    std::ofstream out(cfg.output_dir / "errors.txt");
    out << errors.str();
  }
  if (cfg.write_svg) {
    const std::pair<ChartMetric, const char*> charts[] = {
        {ChartMetric::mae, "mae.svg"},
        {ChartMetric::rmse, "rmse.svg"},
        {ChartMetric::log10_predict_time, "time.svg"}};
    for (const auto& [metric, name] : charts) {
      std::ofstream out(cfg.output_dir / name);
      out << render_svg_chart(result.rows, metric);
    }
  }
  return csv_path;
}

}  // namespace dgp::bench
