#include "dgp/serialization.hpp"

#include "dgp/errors.hpp"

namespace dgp {

using nlohmann::json;

void to_json(json& j, const Hyperparameters& hp) {
  j = json{{"lengthscale", hp.lengthscale},
           {"signal_variance", hp.signal_variance},
           {"noise_variance", hp.noise_variance}};
}

void from_json(const json& j, Hyperparameters& hp) {
  const json& ls = j.at("lengthscale");
  hp.lengthscale = ls.is_array() ? ls.get<std::vector<double>>()
                                 : std::vector<double>{ls.get<double>()};
  hp.signal_variance = j.at("signal_variance").get<double>();
  hp.noise_variance = j.at("noise_variance").get<double>();
}

namespace {

std::string init_name(LatentInit s) { return s == LatentInit::gpoe ? "gpoe" : "mean_of_experts"; }

LatentInit init_from_name(const std::string& s) {
  if (s == "gpoe") return LatentInit::gpoe;
  if (s == "mean_of_experts") return LatentInit::mean_of_experts;
  throw ArgumentError("unknown init_scheme '" + s + "'");
}

}  // namespace

void to_json(json& j, const EmggmConfig& cfg) {
  j = json{{"lambda", cfg.lambda ? json(*cfg.lambda) : json("auto")},
           {"R", cfg.max_iterations},
           {"conv_tol", cfg.conv_tol},
           {"init_scheme", init_name(cfg.init)}};
}

void from_json(const json& j, EmggmConfig& cfg) {
  if (j.contains("lambda")) {
    const json& l = j.at("lambda");
    if (l.is_string()) {
      if (l.get<std::string>() != "auto") throw ArgumentError("lambda must be a number or \"auto\"");
      cfg.lambda.reset();
    } else {
      cfg.lambda = l.get<double>();
    }
  }
  if (j.contains("R")) cfg.max_iterations = j.at("R").get<int>();
  if (j.contains("conv_tol")) cfg.conv_tol = j.at("conv_tol").get<double>();
  if (j.contains("init_scheme")) cfg.init = init_from_name(j.at("init_scheme").get<std::string>());
}

void to_json(json& j, const EmIteration& it) {
  j = json{{"iteration", it.iteration},
           {"objective", it.objective_after},
           {"objective_before", it.objective_before},
           {"omega_change", it.omega_change},
           {"observed_loglik", it.observed_loglik},
           {"jitter", it.jitter},
           {"glasso_sweeps", it.glasso_sweeps},
           {"wall_time_s", it.wall_time_s}};
}

namespace bench {

void to_json(json& j, const BenchmarkConfig& cfg) {
  std::vector<std::string> methods;
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  j = json{{"n", cfg.n},
           {"n_t", cfg.n_t},
           {"train_range", {cfg.train_range.lo, cfg.train_range.hi}},
           {"test_range", {cfg.test_range.lo, cfg.test_range.hi}},
           {"noise_sd", cfg.noise_sd},
           {"M_list", cfg.M_list},
           {"methods", methods},
           {"seeds", cfg.seeds},
           {"partitioner", cfg.partitioner == PartitionMethod::kmeans ? "kmeans" : "random"},
           {"emggm", cfg.emggm},
           {"output_dir", cfg.output_dir.string()},
           {"full_gp_fit_max_n", cfg.full_gp_fit_max_n},
           {"record_timings", cfg.record_timings},
           {"write_svg", cfg.write_svg}};
}

void from_json(const json& j, BenchmarkConfig& cfg) {
  auto interval = [](const json& v) {
    if (!v.is_array() || v.size() != 2) throw ArgumentError("ranges must be [lo, hi]");
    return Interval{v[0].get<double>(), v[1].get<double>()};
  };
  if (j.contains("n")) cfg.n = j.at("n").get<Eigen::Index>();
  if (j.contains("n_t")) cfg.n_t = j.at("n_t").get<Eigen::Index>();
  if (j.contains("train_range")) cfg.train_range = interval(j.at("train_range"));
  if (j.contains("test_range")) cfg.test_range = interval(j.at("test_range"));
  if (j.contains("noise_sd")) cfg.noise_sd = j.at("noise_sd").get<double>();
  if (j.contains("M_list")) cfg.M_list = j.at("M_list").get<std::vector<int>>();
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_string(m.get<std::string>()));
  }
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("partitioner")) {
    const auto p = j.at("partitioner").get<std::string>();
    if (p == "kmeans") cfg.partitioner = PartitionMethod::kmeans;
    else if (p == "random") cfg.partitioner = PartitionMethod::random;
    else throw ArgumentError("unknown partitioner '" + p + "'");
  }
  if (j.contains("emggm")) from_json(j.at("emggm"), cfg.emggm);
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("full_gp_fit_max_n")) cfg.full_gp_fit_max_n = j.at("full_gp_fit_max_n").get<Eigen::Index>();
  if (j.contains("record_timings")) cfg.record_timings = j.at("record_timings").get<bool>();
  if (j.contains("write_svg")) cfg.write_svg = j.at("write_svg").get<bool>();
}

void to_json(json& j, const EmggmRunTrace& trace) {
  j = json{{"M", trace.M},
           {"seed", trace.seed},
           {"lambda", trace.lambda},
           {"converged", trace.converged},
           {"iterations", trace.iterations}};
}

}  // namespace bench
}  // namespace dgp
