#pragma once

#include <json.hpp>

#include "dgp/bench.hpp"
#include "dgp/emggm.hpp"
#include "dgp/gp.hpp"

namespace dgp {

/// {"lengthscale": [...], "signal_variance": x, "noise_variance": x}
void to_json(nlohmann::json& j, const Hyperparameters& hp);
void from_json(const nlohmann::json& j, Hyperparameters& hp);

/// {"lambda": x | "auto", "R": n, "conv_tol": x, "init_scheme": "mean_of_experts" | "gpoe"}
void to_json(nlohmann::json& j, const EmggmConfig& cfg);
void from_json(const nlohmann::json& j, EmggmConfig& cfg);

/// {"iteration", "objective", "objective_before", "omega_change", "wall_time_s", ...}
void to_json(nlohmann::json& j, const EmIteration& it);

namespace bench {

/// Keys mirror the BenchmarkConfig field names; missing keys keep defaults.
void to_json(nlohmann::json& j, const BenchmarkConfig& cfg);
void from_json(const nlohmann::json& j, BenchmarkConfig& cfg);

void to_json(nlohmann::json& j, const EmggmRunTrace& trace);

}  // namespace bench
}  // namespace dgp
