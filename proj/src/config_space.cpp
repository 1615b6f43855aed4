#include "adaptq/config_space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "adaptq/errors.hpp"

namespace adaptq {

namespace {

struct ReferenceRow {
  Configuration config;
  double fps;
  double f1;
};

// Reference measurements for four configurations of one query.
constexpr std::array<ReferenceRow, 4> kReferenceRows{{
    {{150, 4, 8}, 1282.0, 0.57},
    {{200, 4, 4}, 553.0, 0.82},
    {{250, 6, 2}, 285.0, 0.86},
    {{300, 6, 1}, 115.0, 0.91},
}};

// Least-squares fit of seconds-per-invocation = fixed + per_unit * l * r^2
// to the reference rows.
struct CostModel {
  double fixed;
  double per_unit;
};

CostModel fit_cost_model() {
  double mx = 0, my = 0;
  for (const auto& r : kReferenceRows) {
    mx += static_cast<double>(r.config.segment_length) * r.config.resolution * r.config.resolution;
    my += static_cast<double>(r.config.span()) / r.fps;
  }
  mx /= kReferenceRows.size();
  my /= kReferenceRows.size();
  double sxx = 0, sxy = 0;
  for (const auto& r : kReferenceRows) {
    const double x = static_cast<double>(r.config.segment_length) * r.config.resolution * r.config.resolution - mx;
    const double y = static_cast<double>(r.config.span()) / r.fps - my;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = sxy / sxx;
  return {my - k * mx, k};
}

const CostModel& cost_model() {
  static const CostModel model = fit_cost_model();
  return model;
}

struct AccuracyCurve {
  double f1_min;
  double f1_max;
};

// Knob weights of the accuracy score; sampling rate matters most, then
// segment length (shorter localizes better), then resolution.
constexpr double kRateWeight = 0.45;
constexpr double kLengthWeight = 0.30;
constexpr double kResolutionWeight = 0.25;

double unit_position(int v, int lo, int hi) {
  return hi == lo ? 1.0 : static_cast<double>(v - lo) / static_cast<double>(hi - lo);
}

ConfigTable grid_table(const KnobSet& knobs, AccuracyCurve curve, double action_fraction) {
  const auto [rmin, rmax] = std::minmax_element(knobs.resolutions.begin(), knobs.resolutions.end());
  const auto [lmin, lmax] = std::minmax_element(knobs.segment_lengths.begin(), knobs.segment_lengths.end());
  const auto [smin, smax] = std::minmax_element(knobs.sampling_rates.begin(), knobs.sampling_rates.end());
  std::vector<ConfigEntry> entries;
  for (const auto& c : enumerate_configs(knobs.resolutions, knobs.segment_lengths, knobs.sampling_rates)) {
    const double u_r = unit_position(c.resolution, *rmin, *rmax);
    const double u_l = 1.0 - unit_position(c.segment_length, *lmin, *lmax);
    const double u_s = *smax == *smin ? 1.0
                                      : std::log2(static_cast<double>(*smax) / c.sampling_rate) /
                                            std::log2(static_cast<double>(*smax) / *smin);
    const double score = kResolutionWeight * u_r + kLengthWeight * u_l + kRateWeight * u_s;
    const double f1 = curve.f1_min + (curve.f1_max - curve.f1_min) * score;
    CostProfile prof;
    prof.throughput_fps = static_cast<double>(c.span()) / modeled_invocation_seconds(c.resolution, c.segment_length);
    prof.tnr = kPresetTnr;
    prof.tpr = tpr_for_f1(f1, action_fraction, kPresetTnr);
    entries.push_back({c, prof});
  }
  return ConfigTable(std::move(entries));
}

}  // namespace

std::string Configuration::label() const {
  return fmt::format("({},{},{})", resolution, segment_length, sampling_rate);
}

ConfigTable::ConfigTable(std::vector<ConfigEntry> entries, std::optional<double> beta) : entries_(std::move(entries)) {
  if (entries_.empty()) throw InvalidParams("config table needs at least one entry");
  for (const auto& e : entries_) {
    const auto& c = e.config;
    if (c.resolution <= 0 || c.segment_length <= 0 || c.sampling_rate <= 0)
      throw InvalidParams(fmt::format("configuration {} has a non-positive knob", c.label()));
    const auto& p = e.profile;
    if (!(p.throughput_fps > 0.0)) throw InvalidParams(fmt::format("{}: throughput must be positive", c.label()));
    if (!(p.tpr >= 0.0 && p.tpr <= 1.0 && p.tnr >= 0.0 && p.tnr <= 1.0))
      throw InvalidParams(fmt::format("{}: tpr/tnr outside [0, 1]", c.label()));
  }
  beta_overridden_ = beta.has_value();
  rebuild(beta);
}

void ConfigTable::rebuild(std::optional<double> beta) {
  std::vector<CostProfile> profiles;
  profiles.reserve(entries_.size());
  for (const auto& e : entries_) profiles.push_back(e.profile);
  alphas_ = normalize_fastness(profiles);

  order_.resize(entries_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return entries_[a].profile.throughput_fps > entries_[b].profile.throughput_fps;
  });
  rank_.assign(entries_.size(), 0);
  for (std::size_t r = 0; r < order_.size(); ++r) rank_[order_[r]] = r;

  set_beta(beta.value_or(beta_overridden_ ? beta_ : 1.0 / static_cast<double>(entries_.size())));
}

const ConfigEntry& ConfigTable::entry(std::size_t i) const {
  if (i >= entries_.size()) throw ContractViolation(fmt::format("configuration index {} >= {}", i, entries_.size()));
  return entries_[i];
}

void ConfigTable::set_beta(double beta) {
  const double max_alpha = *std::max_element(alphas_.begin(), alphas_.end());
  // A single entry (or all-equal throughputs) has beta == max alpha.
  if (!(beta > 0.0 && beta <= max_alpha + 1e-12))
    throw InvalidParams(fmt::format("beta {} outside (0, {}]", beta, max_alpha));
  beta_ = beta;
}

double ConfigTable::expected_accuracy(std::size_t i) const {
  const auto& p = entry(i).profile;
  return p.measured() ? p.f1_validation : 0.5 * (p.tpr + p.tnr);
}

std::size_t ConfigTable::most_accurate() const {
  const bool all_measured =
      std::all_of(entries_.begin(), entries_.end(), [](const ConfigEntry& e) { return e.profile.measured(); });
  auto score = [&](std::size_t i) {
    const auto& p = entries_[i].profile;
    return all_measured ? p.f1_validation : 0.5 * (p.tpr + p.tnr);
  };
  std::size_t best = order_.back();
  for (auto it = order_.rbegin(); it != order_.rend(); ++it)
    if (score(*it) > score(best)) best = *it;
  return best;
}

std::optional<std::size_t> ConfigTable::index_of(const Configuration& c) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].config == c) return i;
  return std::nullopt;
}

void ConfigTable::set_profile(std::size_t i, const CostProfile& profile) {
  if (!(profile.throughput_fps > 0.0)) throw InvalidParams("throughput must be positive");
  entries_.at(i).profile = profile;
  rebuild(std::nullopt);
}

std::vector<Configuration> enumerate_configs(std::span<const int> resolutions, std::span<const int> segment_lengths,
                                             std::span<const int> sampling_rates) {
  if (resolutions.empty() || segment_lengths.empty() || sampling_rates.empty())
    throw InvalidParams("every knob needs at least one value");
  std::vector<Configuration> out;
  out.reserve(resolutions.size() * segment_lengths.size() * sampling_rates.size());
  for (int r : resolutions)
    for (int l : segment_lengths)
      for (int s : sampling_rates) out.push_back({r, l, s});
  return out;
}

std::vector<double> normalize_fastness(std::span<const CostProfile> profiles) {
  if (profiles.empty()) throw InvalidParams("cannot normalize an empty profile list");
  double total = 0.0;
  for (const auto& p : profiles) {
    if (!(p.throughput_fps > 0.0)) throw InvalidParams("throughput must be positive");
    total += p.throughput_fps;
  }
  std::vector<double> alphas;
  alphas.reserve(profiles.size());
  for (const auto& p : profiles) alphas.push_back(p.throughput_fps / total);
  return alphas;
}

double invocation_time(const Configuration& config, const CostProfile& profile) {
  return static_cast<double>(config.span()) / profile.throughput_fps;
}

double tpr_for_f1(double f1, double action_fraction, double tnr) {
  if (!(action_fraction > 0.0)) return 1.0;
  // F1 = 2 p t / (p t + p + fp) with fp = (1 - p)(1 - tnr); solve for t.
  const double fp = (1.0 - action_fraction) * (1.0 - tnr);
  const double t = f1 * (action_fraction + fp) / (action_fraction * (2.0 - f1));
  return std::clamp(t, 0.0, 1.0);
}

double modeled_invocation_seconds(int resolution, int segment_length) {
  const auto& m = cost_model();
  return m.fixed + m.per_unit * static_cast<double>(segment_length) * resolution * resolution;
}

KnobSet preset_knobs(std::string_view name) {
  if (name == "bdd") return {{150, 200, 250, 300}, {2, 4, 6, 8}, {1, 2, 4, 8}};
  if (name == "thumos" || name == "activitynet") return {{40, 80, 160}, {32, 48, 64}, {2, 4, 8}};
  throw InvalidParams(fmt::format("unknown config-table preset '{}'", name));
}

ConfigTable preset_table(std::string_view name, double action_fraction) {
  if (name == "reference") {
    std::vector<ConfigEntry> entries;
    for (const auto& r : kReferenceRows) {
      CostProfile p;
      p.throughput_fps = r.fps;
      p.tnr = kPresetTnr;
      p.tpr = tpr_for_f1(r.f1, action_fraction, kPresetTnr);
      entries.push_back({r.config, p});
    }
    return ConfigTable(std::move(entries));
  }
  if (name == "bdd") return grid_table(preset_knobs(name), {0.40, 0.91}, action_fraction);
  if (name == "thumos") return grid_table(preset_knobs(name), {0.35, 0.78}, action_fraction);
  if (name == "activitynet") return grid_table(preset_knobs(name), {0.40, 0.85}, action_fraction);
  throw InvalidParams(fmt::format("unknown config-table preset '{}'", name));
}

std::optional<Knob> parse_knob(std::string_view name) {
  if (name == "resolution") return Knob::kResolution;
  if (name == "segment_length") return Knob::kSegmentLength;
  if (name == "sampling_rate") return Knob::kSamplingRate;
  return std::nullopt;
}

std::string_view knob_name(Knob k) {
  switch (k) {
    case Knob::kResolution: return "resolution";
    case Knob::kSegmentLength: return "segment_length";
    case Knob::kSamplingRate: return "sampling_rate";
  }
  return "?";
}

ConfigTable fix_knob(const ConfigTable& table, Knob knob) {
  auto value_of = [knob](const Configuration& c) {
    switch (knob) {
      case Knob::kResolution: return c.resolution;
      case Knob::kSegmentLength: return c.segment_length;
      case Knob::kSamplingRate: return c.sampling_rate;
    }
    return 0;
  };
  std::map<int, std::pair<double, int>> totals;
  for (const auto& e : table.entries()) {
    auto& t = totals[value_of(e.config)];
    t.first += 0.5 * (e.profile.tpr + e.profile.tnr);
    t.second += 1;
  }
  int best_value = totals.begin()->first;
  double best_mean = -1.0;
  for (const auto& [value, t] : totals) {
    const double mean = t.first / t.second;
    if (mean > best_mean) {
      best_mean = mean;
      best_value = value;
    }
  }
  std::vector<ConfigEntry> kept;
  for (const auto& e : table.entries())
    if (value_of(e.config) == best_value) kept.push_back(e);
  return ConfigTable(std::move(kept));
}

}  // namespace adaptq
