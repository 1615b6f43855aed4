#pragma once

// Reward functions for configuration decisions.
//
// Local mode scores every decision from its own window: fast configurations
// are rewarded on empty windows and penalized on windows holding action
// frames. Aggregate mode holds decisions back until `window_frames` frames
// are covered, measures accuracy over that span against the target, and
// gives every held decision the same reward.

#include <cstddef>
#include <string_view>
#include <vector>

#include "adaptq/apfg_sim.hpp"
#include "adaptq/stream_model.hpp"

namespace adaptq {

enum class RewardMode { kLocal, kAggregate };
enum class WindowMetric { kF1, kAccuracy };

struct RewardParams {
  double beta = 0.0;  // 0 means: take the config table's beta
  double target_accuracy = 0.85;
  Frame window_frames = 512;
  RewardMode mode = RewardMode::kAggregate;
  WindowMetric metric = WindowMetric::kF1;

  // Throws InvalidParams; target must lie in (0, 1).
  void validate() const;
};

RewardMode parse_reward_mode(std::string_view s);
WindowMetric parse_window_metric(std::string_view s);
std::string_view to_string(RewardMode m);
std::string_view to_string(WindowMetric m);

// beta - alpha on windows holding an action frame, alpha otherwise.
double local_reward(double alpha_curr, bool window_has_action, double beta);

// F1 when either side has positives, else the fraction of matching frames
// (kF1). kAccuracy always uses the matching fraction.
double window_accuracy(MaskView gt, MaskView pred, WindowMetric metric = WindowMetric::kF1);

// (1 - achieved) / (1 - target) at or above target, achieved - target below.
double aggregate_reward(double achieved, double target);

struct ExperienceTuple {
  ProxyFeature state;
  std::size_t action = 0;
  double reward = 0.0;
  ProxyFeature next_state;
  bool terminal = false;
};

// Decisions whose reward is not known yet, plus the frame labels and
// predictions of everything covered since the last flush.
class WindowAccumulator {
 public:
  // Frames that count toward accuracy but carry no decision (the forced
  // first invocation of a video).
  void observe(Frame frames, bool ground_label, bool prediction);
  // A decision: its experience (reward still unset) and its window.
  void add(ExperienceTuple pending, Frame frames, bool ground_label, bool prediction);

  Frame frames_covered() const { return static_cast<Frame>(gt_.size()); }
  std::size_t pending() const { return pending_.size(); }
  bool empty() const { return pending_.empty() && gt_.empty(); }
  bool full(Frame window_frames) const { return frames_covered() >= window_frames; }

  MaskView ground_truth() const { return gt_; }
  MaskView predictions() const { return pred_; }

  // Scores the window and hands back every pending experience with the same
  // reward, oldest first. Leaves the accumulator empty.
  std::vector<ExperienceTuple> flush(const RewardParams& params);

  double last_window_accuracy() const { return last_accuracy_; }

 private:
  std::vector<ExperienceTuple> pending_;
  FrameMask gt_;
  FrameMask pred_;
  double last_accuracy_ = 0.0;
};

}  // namespace adaptq
