#pragma once

// Offline profiling of the configuration table and the fixed-configuration
// choice of the sliding baseline.

#include <cstddef>
#include <span>

#include "adaptq/apfg_sim.hpp"
#include "adaptq/config_space.hpp"
#include "adaptq/executors.hpp"

namespace adaptq {

// Runs the sliding executor with every configuration on `validation` and
// returns a copy of `table` whose profiles carry the measured fps and F1.
// An overridden beta survives; otherwise it is recomputed as 1/N.
ConfigTable estimate_cost_metrics(std::span<const VideoStream> validation, const FeatureSource& features,
                                  const ConfigTable& table, const ExecOptions& opts = {});

// Fastest entry whose validation F1 reaches `target`. Throws NoFeasibleConfig
// when none does and ContractViolation when F1 was never measured.
std::size_t plan_sliding_config(const ConfigTable& table, double target_accuracy);

}  // namespace adaptq
