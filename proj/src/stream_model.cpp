#include "adaptq/stream_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <fmt/format.h>

#include "adaptq/errors.hpp"

namespace adaptq {

namespace {

constexpr int kMaxPlacementAttempts = 10000;
constexpr int kMaxLengthResamples = 64;

Frame draw_action_length(const DatasetParams& p, Frame cap, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(p.mean_action_len, p.std_action_len);
  double len = p.mean_action_len;
  for (int i = 0; i < kMaxLengthResamples; ++i) {
    len = p.std_action_len > 0.0 ? dist(rng) : p.mean_action_len;
    if (len >= static_cast<double>(p.min_action_len) && len <= static_cast<double>(p.max_action_len)) break;
  }
  auto frames = static_cast<Frame>(std::llround(len));
  frames = std::clamp(frames, p.min_action_len, p.max_action_len);
  return std::clamp<Frame>(frames, 1, cap);
}

// Keeps one non-action frame between neighbouring instances.
bool collides(const std::vector<ActionInstance>& placed, Frame start, Frame end) {
  return std::any_of(placed.begin(), placed.end(), [&](const ActionInstance& a) {
    return start <= a.end && end >= a.start;
  });
}

}  // namespace

void DatasetParams::validate() const {
  if (num_videos <= 0) throw InvalidParams("num_videos must be positive");
  if (frames_per_video <= 0) throw InvalidParams("frames_per_video must be positive");
  if (!(action_fraction >= 0.0 && action_fraction < 1.0))
    throw InvalidParams(fmt::format("action_fraction {} outside [0, 1)", action_fraction));
  if (min_action_len < 1) throw InvalidParams("min_action_len must be at least 1");
  if (std_action_len < 0.0) throw InvalidParams("std_action_len must be non-negative");
  if (!(static_cast<double>(min_action_len) <= mean_action_len &&
        mean_action_len <= static_cast<double>(max_action_len)))
    throw InvalidParams("action lengths must satisfy min <= mean <= max");
  if (mean_action_len >= static_cast<double>(frames_per_video))
    throw InvalidParams(fmt::format("mean_action_len {} does not fit in {} frames", mean_action_len,
                                    frames_per_video));
}

DatasetParams DatasetParams::preset(std::string_view name) {
  DatasetParams p;
  if (name == "bdd") {
    p.num_videos = 16;
    p.frames_per_video = 2048;
    p.action_fraction = 0.0703;
    p.mean_action_len = 115.0;
    p.std_action_len = 58.7;
    p.min_action_len = 6;
    p.max_action_len = 305;
  } else if (name == "thumos") {
    p.num_videos = 12;
    p.frames_per_video = 8192;
    p.action_fraction = 0.4027;
    p.mean_action_len = 211.0;
    p.std_action_len = 186.3;
    p.min_action_len = 18;
    p.max_action_len = 3543;
  } else if (name == "activitynet") {
    p.num_videos = 8;
    p.frames_per_video = 16384;
    p.action_fraction = 0.5637;
    p.mean_action_len = 909.0;
    p.std_action_len = 1239.1;
    p.min_action_len = 20;
    p.max_action_len = 6931;
  } else {
    throw InvalidParams(fmt::format("unknown dataset preset '{}'", name));
  }
  return p;
}

std::vector<VideoStream> synth_dataset(const DatasetParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::vector<VideoStream> videos;
  videos.reserve(static_cast<std::size_t>(params.num_videos));

  const Frame nf = params.frames_per_video;
  const Frame cap = std::max<Frame>(1, nf - 2);
  // Shortfall or excess of one video is carried into the next so the
  // dataset-level fraction tracks the target even for short videos.
  double carry = 0.0;
  for (std::int64_t v = 0; v < params.num_videos; ++v) {
    VideoStream video{.id = params.first_id + v, .num_frames = nf, .instances = {}};
    const double target = params.action_fraction * static_cast<double>(nf) + carry;
    Frame covered = 0;
    while (params.action_fraction > 0.0) {
      const Frame len = draw_action_length(params, cap, rng);
      // Place only if it moves the covered count closer to the target.
      if (static_cast<double>(covered) + 0.5 * static_cast<double>(len) >= target) break;
      std::uniform_int_distribution<Frame> pos(0, nf - len);
      bool placed = false;
      for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
        const Frame s = pos(rng);
        if (!collides(video.instances, s, s + len)) {
          video.instances.push_back({s, s + len});
          covered += len;
          placed = true;
          break;
        }
      }
      if (!placed)
        throw InvalidParams(fmt::format("could not place an action of {} frames in video {} after {} attempts",
                                        len, v, kMaxPlacementAttempts));
    }
    carry = target - static_cast<double>(covered);
    std::sort(video.instances.begin(), video.instances.end(),
              [](const ActionInstance& a, const ActionInstance& b) { return a.start < b.start; });
    videos.push_back(std::move(video));
  }
  return videos;
}

void validate_stream(const VideoStream& video) {
  if (video.num_frames <= 0) throw ContractViolation(fmt::format("video {} has no frames", video.id));
  Frame prev_end = 0;
  bool first = true;
  for (const auto& a : video.instances) {
    if (a.start < 0 || a.start >= a.end || a.end > video.num_frames)
      throw ContractViolation(fmt::format("video {}: instance [{}, {}) out of range", video.id, a.start, a.end));
    if (!first && a.start < prev_end)
      throw ContractViolation(fmt::format("video {}: instances overlap or are unsorted", video.id));
    prev_end = a.end;
    first = false;
  }
}

bool label_at(const VideoStream& video, Frame n) {
  if (n < 0 || n >= video.num_frames)
    throw ContractViolation(fmt::format("frame {} outside video {} of {} frames", n, video.id, video.num_frames));
  auto it = std::upper_bound(video.instances.begin(), video.instances.end(), n,
                             [](Frame f, const ActionInstance& a) { return f < a.start; });
  if (it == video.instances.begin()) return false;
  --it;
  return n < it->end;
}

Frame action_frames_in(const VideoStream& video, Frame start, Frame end) {
  start = std::max<Frame>(start, 0);
  end = std::min(end, video.num_frames);
  Frame count = 0;
  for (const auto& a : video.instances) {
    if (a.start >= end) break;
    const Frame lo = std::max(a.start, start);
    const Frame hi = std::min(a.end, end);
    if (hi > lo) count += hi - lo;
  }
  return count;
}

bool window_label(const VideoStream& video, Frame start, Frame end, SegmentLabelMode mode) {
  if (start < 0 || start >= end || end > video.num_frames)
    throw ContractViolation(fmt::format("window [{}, {}) invalid for video of {} frames", start, end, video.num_frames));
  if (mode == SegmentLabelMode::kFraction) {
    // Integer form of count / len > 1/2.
    return 2 * action_frames_in(video, start, end) > end - start;
  }
  for (const auto& a : video.instances) {
    if (a.start >= end) break;
    const Frame inter = std::min(a.end, end) - std::max(a.start, start);
    if (inter <= 0) continue;
    const Frame uni = std::max(a.end, end) - std::min(a.start, start);
    if (2 * inter > uni) return true;
  }
  return false;
}

FrameMask ground_truth_mask(const VideoStream& video) {
  FrameMask mask(static_cast<std::size_t>(video.num_frames), 0);
  for (const auto& a : video.instances)
    std::fill(mask.begin() + a.start, mask.begin() + a.end, std::uint8_t{1});
  return mask;
}

Confusion confusion(MaskView pred, MaskView gt) {
  if (pred.size() != gt.size())
    throw ContractViolation(fmt::format("mask length mismatch: {} vs {}", pred.size(), gt.size()));
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

F1Score f1_from_confusion(const Confusion& c) {
  const std::int64_t pred_pos = c.tp + c.fp;
  const std::int64_t gt_pos = c.tp + c.fn;
  if (pred_pos == 0 && gt_pos == 0) return {1.0, 1.0, 1.0};
  F1Score s;
  s.precision = pred_pos > 0 ? static_cast<double>(c.tp) / static_cast<double>(pred_pos) : 0.0;
  s.recall = gt_pos > 0 ? static_cast<double>(c.tp) / static_cast<double>(gt_pos) : 0.0;
  s.f1 = 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
  return s;
}

F1Score frame_f1(MaskView pred, MaskView gt) { return f1_from_confusion(confusion(pred, gt)); }

DatasetStats dataset_stats(std::span<const VideoStream> videos) {
  DatasetStats s;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& v : videos) {
    ++s.videos;
    s.frames += v.num_frames;
    for (const auto& a : v.instances) {
      const Frame len = a.length();
      s.action_frames += len;
      sum += static_cast<double>(len);
      sum_sq += static_cast<double>(len) * static_cast<double>(len);
      s.min_action_len = s.instances == 0 ? len : std::min(s.min_action_len, len);
      s.max_action_len = std::max(s.max_action_len, len);
      ++s.instances;
    }
  }
  if (s.frames > 0) s.action_fraction = static_cast<double>(s.action_frames) / static_cast<double>(s.frames);
  if (s.instances > 0) {
    const double n = static_cast<double>(s.instances);
    s.mean_action_len = sum / n;
    s.std_action_len = std::sqrt(std::max(0.0, sum_sq / n - s.mean_action_len * s.mean_action_len));
  }
  return s;
}

}  // namespace adaptq
