#pragma once

// Query executors. Each one walks every video from frame 0 to its end with
// non-overlapping windows and marks every frame of a window with the
// window's prediction.
//
// Accuracy is scored per frame against the reference labels of the
// executor's own windows (the segment label of each window), so a perfect
// window classifier scores f1 = 1 whatever windows it was given. The plain
// frame-level score against instance labels is reported alongside as
// frame_score.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adaptq/apfg_sim.hpp"
#include "adaptq/config_space.hpp"
#include "adaptq/dqn.hpp"
#include "adaptq/stream_model.hpp"

namespace adaptq {

struct DecisionTrace {
  std::int64_t video = 0;
  std::int64_t t = 0;  // invocation index within the video
  Frame start = 0;
  Frame span = 0;  // actual (possibly clipped) window length
  std::string config;
  bool prediction = false;
  std::optional<double> reward;
};

struct VideoResult {
  std::int64_t id = 0;
  Frame num_frames = 0;
  FrameMask predicted_mask;
  FrameMask reference_mask;  // segment labels of the executor's windows
  double cost_seconds = 0.0;
  std::int64_t invocations = 0;
  Confusion confusion;
  Confusion frame_confusion;  // against instance frame labels
};

struct ExecutionReport {
  std::string strategy;
  std::vector<VideoResult> videos;  // input order

  double total_cost_seconds = 0.0;
  Frame frames_covered = 0;
  std::int64_t invocations = 0;
  double throughput_fps = 0.0;
  Confusion confusion;
  F1Score score;
  F1Score frame_score;

  // Frames whose final prediction came from each configuration, by label.
  std::vector<std::pair<std::string, Frame>> config_histogram;
  Frame low_res_frames = 0;
  Frame high_res_frames = 0;

  std::vector<DecisionTrace> traces;
};

struct ExecOptions {
  std::size_t threads = 1;  // videos run in parallel; results merge in input order
  bool record_traces = true;
};

// Resolutions strictly below the midpoint of the table's resolution range
// count as low.
bool is_low_resolution(const ConfigTable& table, int resolution);

ExecutionReport run_sliding(std::span<const VideoStream> videos, std::size_t config, const FeatureSource& features,
                            const ConfigTable& table, const ExecOptions& opts = {});

// Greedy (epsilon = 0) policy; the first window of each video uses the most
// accurate configuration.
ExecutionReport run_rl(std::span<const VideoStream> videos, const QNetwork& net, const FeatureSource& features,
                       const ConfigTable& table, const ExecOptions& opts = {});

// Rule-based switching: slowest on ACTION, one rank faster on an ACTION to
// NO-ACTION flip, fastest after 10 consecutive NO-ACTION windows.
ExecutionReport run_heuristic(std::span<const VideoStream> videos, const FeatureSource& features,
                              const ConfigTable& table, const ExecOptions& opts = {});

struct FrameProfile {
  double throughput_fps = 0.0;
  double tpr = 1.0;
  double tnr = 1.0;
  bool high_resolution = true;
  std::uint64_t seed = 0;
};

inline constexpr double kFrameModelSpeedup = 5.9;

// fps = 5.9x the most accurate configuration, tpr 0.6, tnr 0.9.
FrameProfile default_frame_profile(const ConfigTable& table, std::uint64_t seed);

ExecutionReport run_frame_pp(std::span<const VideoStream> videos, const FrameProfile& profile,
                             const ExecOptions& opts = {});

// Tiles with `filter`; every window it marks ACTION is tiled again with
// `heavy` (clipped to the filter window), and those predictions are final.
ExecutionReport run_segment_pp(std::span<const VideoStream> videos, std::size_t filter, std::size_t heavy,
                               const ApfgSim& sim, const ConfigTable& table, const ExecOptions& opts = {});

// Runs of set frames as half-open intervals.
std::vector<ActionInstance> extract_segments(MaskView mask);

struct ComparisonRow {
  std::string strategy;
  double throughput_fps = 0.0;
  double f1 = 0.0;
  bool meets_target = false;
  double speedup = 0.0;  // vs the "sliding" report, or the first report without one
  double gap = 0.0;      // |f1 - target|
};

// Throws ContractViolation when the reports cover different videos.
std::vector<ComparisonRow> compare(std::span<const ExecutionReport> reports, double target);

std::string comparison_csv(std::span<const ComparisonRow> rows, double target);
// One row per (strategy, video) and an "ALL" row per strategy.
std::string reports_csv(std::span<const ExecutionReport> reports);
std::string traces_ndjson(std::span<const ExecutionReport> reports);
std::string segments_ndjson(std::span<const ExecutionReport> reports);

}  // namespace adaptq
