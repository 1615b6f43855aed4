#include "adaptq/planning.hpp"

#include <fmt/format.h>

#include "adaptq/errors.hpp"

namespace adaptq {

ConfigTable estimate_cost_metrics(std::span<const VideoStream> validation, const FeatureSource& features,
                                  const ConfigTable& table, const ExecOptions& opts) {
  if (validation.empty()) throw ContractViolation("cost estimation needs validation videos");
  ExecOptions quiet = opts;
  quiet.record_traces = false;
  std::vector<ConfigEntry> entries = table.entries();
  for (std::size_t c = 0; c < entries.size(); ++c) {
    const auto rep = run_sliding(validation, c, features, table, quiet);
    entries[c].profile.throughput_fps = rep.throughput_fps;
    entries[c].profile.f1_validation = rep.score.f1;
  }
  const double default_beta = 1.0 / static_cast<double>(table.size());
  return ConfigTable(std::move(entries),
                     table.beta() != default_beta ? std::optional<double>(table.beta()) : std::nullopt);
}

std::size_t plan_sliding_config(const ConfigTable& table, double target_accuracy) {
  double best_max = -1.0;
  for (std::size_t c : table.fastness_order()) {
    const auto& p = table.profile(c);
    if (!p.measured()) throw ContractViolation(fmt::format("{} has no validation F1", table.config(c).label()));
    best_max = std::max(best_max, p.f1_validation);
  }
  // fastness_order runs fastest first, so the first qualifying entry wins.
  for (std::size_t c : table.fastness_order())
    if (table.profile(c).f1_validation >= target_accuracy) return c;
  throw NoFeasibleConfig(
      fmt::format("no configuration reaches F1 {} (best is {:.4f})", target_accuracy, best_max));
}

}  // namespace adaptq
