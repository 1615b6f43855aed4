#pragma once

// The knob space: configurations, their cost/accuracy profiles and the
// normalized fastness weights used by the local reward.

#include <compare>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adaptq/stream_model.hpp"

namespace adaptq {

struct Configuration {
  int resolution = 0;      // pixels per side; frames are square
  int segment_length = 0;  // frames sampled per invocation
  int sampling_rate = 0;   // stride between sampled frames

  // Frames covered by one invocation.
  Frame span() const { return static_cast<Frame>(segment_length) * sampling_rate; }
  std::string label() const;

  auto operator<=>(const Configuration&) const = default;
};

struct CostProfile {
  double throughput_fps = 0.0;
  double tpr = 1.0;
  double tnr = 1.0;
  // NaN until measured by estimate_cost_metrics.
  double f1_validation = std::numeric_limits<double>::quiet_NaN();

  bool measured() const { return f1_validation == f1_validation; }
};

struct ConfigEntry {
  Configuration config;
  CostProfile profile;
};

class ConfigTable {
 public:
  ConfigTable() = default;
  // beta defaults to 1/N, the mean fastness.
  explicit ConfigTable(std::vector<ConfigEntry> entries, std::optional<double> beta = std::nullopt);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<ConfigEntry>& entries() const { return entries_; }
  const ConfigEntry& entry(std::size_t i) const;
  const Configuration& config(std::size_t i) const { return entry(i).config; }
  const CostProfile& profile(std::size_t i) const { return entry(i).profile; }

  const std::vector<double>& alphas() const { return alphas_; }
  double alpha(std::size_t i) const { return alphas_.at(i); }
  double beta() const { return beta_; }
  void set_beta(double beta);

  // Indices from fastest to slowest; equal throughputs keep enumeration order.
  const std::vector<std::size_t>& fastness_order() const { return order_; }
  // Position of entry i in fastness_order (0 = fastest).
  std::size_t fastness_rank(std::size_t i) const { return rank_.at(i); }
  std::size_t fastest() const { return order_.front(); }
  std::size_t slowest() const { return order_.back(); }

  // Highest validation F1 when measured, otherwise highest (tpr + tnr) / 2.
  // Ties go to the slower entry.
  std::size_t most_accurate() const;
  double expected_accuracy(std::size_t i) const;

  std::optional<std::size_t> index_of(const Configuration& c) const;

  // Replaces one profile and recomputes fastness.
  void set_profile(std::size_t i, const CostProfile& profile);

 private:
  void rebuild(std::optional<double> beta);

  std::vector<ConfigEntry> entries_;
  std::vector<double> alphas_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> rank_;
  double beta_ = 0.0;
  bool beta_overridden_ = false;
};

// Cartesian product, resolution-major, then segment length, then rate.
std::vector<Configuration> enumerate_configs(std::span<const int> resolutions, std::span<const int> segment_lengths,
                                             std::span<const int> sampling_rates);

// alpha_c = fps_c / sum(fps).
std::vector<double> normalize_fastness(std::span<const CostProfile> profiles);

// Seconds for one full-span invocation: span / fps.
double invocation_time(const Configuration& config, const CostProfile& profile);

// True-positive rate at which a window classifier with the given tnr reaches
// `f1` in expectation on data with `action_fraction` positives. Clamped to [0, 1].
double tpr_for_f1(double f1, double action_fraction, double tnr);

// Per-invocation seconds for an (r, l) input under the fitted cost model.
double modeled_invocation_seconds(int resolution, int segment_length);

// Knob values of a named preset.
struct KnobSet {
  std::vector<int> resolutions;
  std::vector<int> segment_lengths;
  std::vector<int> sampling_rates;
};
KnobSet preset_knobs(std::string_view name);

// "reference": the four reference rows with their measured fps and F1.
// "bdd", "thumos", "activitynet": full knob grids with modeled fps and
// accuracy. tpr is derived so the expected validation F1 matches the
// preset's accuracy curve on data with `action_fraction` positives.
ConfigTable preset_table(std::string_view name, double action_fraction);

// tnr used by every preset configuration.
inline constexpr double kPresetTnr = 0.99;

enum class Knob { kResolution, kSegmentLength, kSamplingRate };
std::optional<Knob> parse_knob(std::string_view name);
std::string_view knob_name(Knob k);

// Keeps only entries whose `knob` equals its most accurate setting: the value
// with the highest mean (tpr + tnr) / 2 over the entries that use it.
ConfigTable fix_knob(const ConfigTable& table, Knob knob);

}  // namespace adaptq
