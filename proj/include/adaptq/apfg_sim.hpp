#pragma once

// Stochastic stand-in for the adaptive proxy feature generator (APFG).
//
// One invocation looks at the window [start, start + l*s) of a stream under a
// configuration and returns a proxy feature vector, an ACTION / NO-ACTION
// prediction and a simulated cost. Feature layout:
//   ch0  in-window action fraction + noise
//   ch1  action fraction of the next `lookahead` frames after the window + noise
//   ch2  start / num_frames
//   ch3  configuration index / N
//   ch4+ pure noise
// Noise std is noise_scale * (1 - (tpr + tnr) / 2) of the chosen configuration.
//
// Every draw comes from a counter-based stream keyed by
// (seed, video id, configuration, start), so a window's output does not
// depend on what was invoked before it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "adaptq/config_space.hpp"
#include "adaptq/stream_model.hpp"

namespace adaptq {

struct ApfgParams {
  std::size_t feature_dim = 32;
  double noise_scale = 0.25;
  Frame lookahead = 64;
  std::uint64_t seed = 0;
  SegmentLabelMode label_mode = SegmentLabelMode::kFraction;

  void validate() const;
};

struct Window {
  Frame start = 0;
  Frame end = 0;
  Frame length() const { return end - start; }
};

using ProxyFeature = std::vector<float>;

struct ApfgOutput {
  ProxyFeature feature;
  bool prediction = false;
  bool ground_label = false;  // segment label of `window`
  double cost_seconds = 0.0;
  Window window;
};

class ApfgSim {
 public:
  explicit ApfgSim(ApfgParams params = {});

  const ApfgParams& params() const { return params_; }

  // Window end is clipped to min(start + span, limit, num_frames); a limit of
  // -1 means the video end. Cost scales with the clipped length.
  ApfgOutput invoke(const VideoStream& video, Frame start, const ConfigTable& table, std::size_t config,
                    Frame limit = -1) const;

 private:
  ApfgParams params_;
};

// Where the training loop and executors obtain APFG outputs.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual ApfgOutput observe(const VideoStream& video, Frame start, std::size_t config) const = 0;
  virtual std::size_t feature_dim() const = 0;
};

class DirectFeatureSource final : public FeatureSource {
 public:
  DirectFeatureSource(const ApfgSim& sim, const ConfigTable& table) : sim_(sim), table_(table) {}
  ApfgOutput observe(const VideoStream& video, Frame start, std::size_t config) const override {
    return sim_.invoke(video, start, table_, config);
  }
  std::size_t feature_dim() const override { return sim_.params().feature_dim; }

 private:
  const ApfgSim& sim_;
  const ConfigTable& table_;
};

// Precomputed outputs for every start reachable from frame 0 by chaining
// configuration spans. A lookup outside that set is a ContractViolation.
class FeatureCache final : public FeatureSource {
 public:
  ApfgOutput observe(const VideoStream& video, Frame start, std::size_t config) const override;
  std::size_t feature_dim() const override { return feature_dim_; }

  const ApfgOutput& at(std::int64_t video_id, Frame start, std::size_t config) const;
  bool contains(std::int64_t video_id, Frame start, std::size_t config) const;
  std::size_t size() const;
  std::size_t num_configs() const { return num_configs_; }
  std::uint64_t seed() const { return seed_; }

  // Little-endian f32 records behind a JSON index header.
  void save(const std::filesystem::path& path) const;
  static FeatureCache load(const std::filesystem::path& path);

 private:
  friend FeatureCache precompute_features(const ApfgSim&, std::span<const VideoStream>, const ConfigTable&);

  struct VideoSlots {
    Frame num_frames = 0;
    std::vector<std::int32_t> slot_of_start;  // -1 when unreachable
    std::vector<ApfgOutput> outputs;          // slot * num_configs + config
  };

  std::unordered_map<std::int64_t, VideoSlots> videos_;
  std::vector<std::int64_t> video_order_;
  std::size_t num_configs_ = 0;
  std::size_t feature_dim_ = 0;
  std::uint64_t seed_ = 0;
};

// Starts reachable from frame 0 when every step advances by one of `spans`.
std::vector<std::uint8_t> reachable_starts(Frame num_frames, std::span<const Frame> spans);

FeatureCache precompute_features(const ApfgSim& sim, std::span<const VideoStream> videos, const ConfigTable& table);

}  // namespace adaptq
