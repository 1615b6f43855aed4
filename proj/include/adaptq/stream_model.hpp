#pragma once

// Labeled synthetic frame streams, ground-truth labeling and frame metrics.
//
// Frame indices are 0-based and every interval is half-open [start, end).

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace adaptq {

using Frame = std::int64_t;

struct ActionInstance {
  Frame start = 0;  // inclusive
  Frame end = 0;    // exclusive

  Frame length() const { return end - start; }
  bool operator==(const ActionInstance&) const = default;
};

struct VideoStream {
  std::int64_t id = 0;
  Frame num_frames = 0;
  std::vector<ActionInstance> instances;  // disjoint, ascending

  bool operator==(const VideoStream&) const = default;
};

struct DatasetParams {
  std::int64_t num_videos = 16;
  Frame frames_per_video = 2048;
  double action_fraction = 0.0703;
  double mean_action_len = 115.0;
  double std_action_len = 58.7;
  Frame min_action_len = 6;
  Frame max_action_len = 305;
  std::uint64_t seed = 0;
  std::int64_t first_id = 0;  // ids run first_id, first_id + 1, ...

  // Throws InvalidParams.
  void validate() const;

  // "bdd", "thumos", "activitynet": action statistics of the three reference
  // corpora; video count and length are desk-scale defaults.
  static DatasetParams preset(std::string_view name);
};

// One byte per frame, 0 or 1.
using FrameMask = std::vector<std::uint8_t>;
using MaskView = std::span<const std::uint8_t>;

// How a window's binary label is derived from frame labels.
enum class SegmentLabelMode {
  kFraction,     // action frames / window length > 0.5
  kIntervalIoU,  // max over instances of |W ∩ I| / |W ∪ I| > 0.5
};

std::vector<VideoStream> synth_dataset(const DatasetParams& params);

// Throws ContractViolation when the stream breaks its invariants.
void validate_stream(const VideoStream& video);

bool label_at(const VideoStream& video, Frame n);

// Number of action frames in [start, end), clipped to the video.
Frame action_frames_in(const VideoStream& video, Frame start, Frame end);

bool window_label(const VideoStream& video, Frame start, Frame end,
                  SegmentLabelMode mode = SegmentLabelMode::kFraction);

FrameMask ground_truth_mask(const VideoStream& video);

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Confusion confusion(MaskView pred, MaskView gt);

// Both masks without positives scores 1 (precision, recall and f1);
// positives on only one side scores f1 = 0.
F1Score f1_from_confusion(const Confusion& c);

F1Score frame_f1(MaskView pred, MaskView gt);

struct DatasetStats {
  std::int64_t videos = 0;
  Frame frames = 0;
  Frame action_frames = 0;
  std::int64_t instances = 0;
  double action_fraction = 0.0;
  double mean_action_len = 0.0;
  double std_action_len = 0.0;
  Frame min_action_len = 0;
  Frame max_action_len = 0;
};

DatasetStats dataset_stats(std::span<const VideoStream> videos);

}  // namespace adaptq
