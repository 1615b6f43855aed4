#include "adaptq/rewards.hpp"

#include <fmt/format.h>

#include "adaptq/errors.hpp"

namespace adaptq {

void RewardParams::validate() const {
  if (!(target_accuracy > 0.0 && target_accuracy < 1.0))
    throw InvalidParams(fmt::format("target accuracy {} must lie in (0, 1)", target_accuracy));
  if (window_frames <= 0) throw InvalidParams("reward window must cover at least one frame");
  if (beta < 0.0) throw InvalidParams("beta must be non-negative");
}

RewardMode parse_reward_mode(std::string_view s) {
  if (s == "local") return RewardMode::kLocal;
  if (s == "aggregate") return RewardMode::kAggregate;
  throw InvalidParams(fmt::format("unknown reward mode '{}'", s));
}

WindowMetric parse_window_metric(std::string_view s) {
  if (s == "f1") return WindowMetric::kF1;
  if (s == "accuracy") return WindowMetric::kAccuracy;
  throw InvalidParams(fmt::format("unknown window metric '{}'", s));
}

std::string_view to_string(RewardMode m) { return m == RewardMode::kLocal ? "local" : "aggregate"; }
std::string_view to_string(WindowMetric m) { return m == WindowMetric::kF1 ? "f1" : "accuracy"; }

double local_reward(double alpha_curr, bool window_has_action, double beta) {
  return window_has_action ? beta - alpha_curr : alpha_curr;
}

double window_accuracy(MaskView gt, MaskView pred, WindowMetric metric) {
  if (gt.size() != pred.size())
    throw ContractViolation(fmt::format("window mask lengths differ: {} vs {}", gt.size(), pred.size()));
  if (gt.empty()) throw ContractViolation("window accuracy of an empty window");
  const Confusion c = confusion(pred, gt);
  if (metric == WindowMetric::kF1 && (c.tp + c.fp + c.fn) > 0) return f1_from_confusion(c).f1;
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(gt.size());
}

double aggregate_reward(double achieved, double target) {
  if (achieved >= target) return (1.0 - achieved) / (1.0 - target);
  return achieved - target;
}

void WindowAccumulator::observe(Frame frames, bool ground_label, bool prediction) {
  gt_.insert(gt_.end(), static_cast<std::size_t>(frames), ground_label ? 1 : 0);
  pred_.insert(pred_.end(), static_cast<std::size_t>(frames), prediction ? 1 : 0);
}

void WindowAccumulator::add(ExperienceTuple pending, Frame frames, bool ground_label, bool prediction) {
  pending_.push_back(std::move(pending));
  observe(frames, ground_label, prediction);
}

std::vector<ExperienceTuple> WindowAccumulator::flush(const RewardParams& params) {
  std::vector<ExperienceTuple> out;
  if (!gt_.empty()) {
    last_accuracy_ = window_accuracy(gt_, pred_, params.metric);
    const double r = aggregate_reward(last_accuracy_, params.target_accuracy);
    for (auto& e : pending_) e.reward = r;
    out = std::move(pending_);
  }
  pending_.clear();
  gt_.clear();
  pred_.clear();
  return out;
}

}  // namespace adaptq
