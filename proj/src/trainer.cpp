#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "adaptq/dqn.hpp"
#include "adaptq/errors.hpp"
#include "adaptq/rng.hpp"
#include "adaptq/serialization.hpp"

namespace adaptq {

void TrainParams::validate() const {
  if (episodes < 0) throw InvalidParams("episodes must be non-negative");
  if (batch_size == 0) throw InvalidParams("batch size must be positive");
  if (batch_size > buffer_capacity)
    throw InvalidParams(fmt::format("batch size {} exceeds buffer capacity {}", batch_size, buffer_capacity));
  if (warmup > buffer_capacity)
    throw InvalidParams(fmt::format("warmup {} exceeds buffer capacity {}", warmup, buffer_capacity));
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidParams(fmt::format("gamma {} outside [0, 1)", gamma));
  if (!(learning_rate > 0.0)) throw InvalidParams("learning rate must be positive");
  for (double e : {epsilon_start, epsilon_end})
    if (!(e >= 0.0 && e <= 1.0)) throw InvalidParams(fmt::format("epsilon {} outside [0, 1]", e));
  if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0))
    throw InvalidParams("epsilon decay fraction outside [0, 1]");
  if (target_sync_steps == 0 || update_period == 0) throw InvalidParams("sync and update periods must be positive");
}

double TrainParams::epsilon_at(std::int64_t episode) const {
  const double span = std::floor(static_cast<double>(episodes) * epsilon_decay_fraction);
  if (span <= 0.0 || static_cast<double>(episode) >= span) return epsilon_end;
  return epsilon_start + (epsilon_end - epsilon_start) * static_cast<double>(episode) / span;
}

namespace {

class Trainer {
 public:
  Trainer(const ConfigTable& table, const RewardParams& reward, const TrainParams& params,
          std::size_t feature_dim, const PushObserver& observer)
      : table_(table),
        reward_(reward),
        params_(params),
        observer_(observer),
        beta_(reward.beta > 0.0 ? reward.beta : table.beta()),
        net_(make_q_network(feature_dim, table.size(), params.seed)),
        target_(net_),
        adam_(params.learning_rate),
        buffer_(params.buffer_capacity, params.warmup),
        rng_(mix_key({params.seed, 0x5452'4149'4eULL})) {}

  void episode(std::span<const VideoStream> videos, const FeatureSource& features, std::int64_t ep) {
    loss_sum_ = reward_sum_ = 0.0;
    updates_in_ep_ = pushes_in_ep_ = decisions_in_ep_ = 0;
    eps_sched_ = params_.epsilon_at(ep);

    std::vector<std::size_t> order(videos.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t v : order) run_video(videos[v], features);

    log_.push_back({ep, updates_in_ep_ ? loss_sum_ / static_cast<double>(updates_in_ep_) : 0.0,
                    pushes_in_ep_ ? reward_sum_ / static_cast<double>(pushes_in_ep_) : 0.0, eps_sched_,
                    decisions_in_ep_});
  }

  bool warm() const { return buffer_.warm(); }
  TrainResult result() && { return {std::move(net_), std::move(log_), stats_}; }

 private:
  void run_video(const VideoStream& video, const FeatureSource& features) {
    WindowAccumulator acc;
    const auto first = features.observe(video, 0, table_.most_accurate());
    acc.observe(first.window.length(), first.ground_label, first.prediction);
    ProxyFeature state = first.feature;
    Frame pos = first.window.end;

    while (pos < video.num_frames) {
      const double eps = buffer_.warm() ? eps_sched_ : 1.0;
      const std::size_t a = select_config(net_, state, eps, rng_);
      auto out = features.observe(video, pos, a);
      ExperienceTuple exp{std::move(state), a, 0.0, out.feature, out.window.end >= video.num_frames};
      ++stats_.decisions;
      ++decisions_in_ep_;

      if (reward_.mode == RewardMode::kLocal) {
        const bool has_action = action_frames_in(video, out.window.start, out.window.end) > 0;
        exp.reward = local_reward(table_.alpha(a), has_action, beta_);
        push(std::move(exp));
      } else {
        const bool terminal = exp.terminal;
        acc.add(std::move(exp), out.window.length(), out.ground_label, out.prediction);
        if (terminal || acc.full(reward_.window_frames)) {
          for (auto& e : acc.flush(reward_)) push(std::move(e));
          ++stats_.windows_flushed;
        }
      }
      state = std::move(out.feature);
      pos = out.window.end;
      maybe_update();
    }
  }

  void push(ExperienceTuple exp) {
    if (!std::isfinite(exp.reward)) throw TrainingDiverged(fmt::format("non-finite reward {}", exp.reward));
    if (observer_) observer_(exp);
    reward_sum_ += exp.reward;
    ++pushes_in_ep_;
    ++stats_.experiences_pushed;
    buffer_.push(std::move(exp));
  }

  void maybe_update() {
    if (!buffer_.warm() || buffer_.size() < params_.batch_size) return;
    if (static_cast<std::size_t>(stats_.decisions) % params_.update_period != 0) return;
    const auto batch = buffer_.sample(params_.batch_size, rng_);
    loss_sum_ += train_step(net_, target_, batch, params_.gamma, adam_);
    ++updates_in_ep_;
    ++stats_.updates;
    if (static_cast<std::size_t>(stats_.updates) % params_.target_sync_steps == 0) {
      target_ = net_;
      ++stats_.target_syncs;
    }
  }

  const ConfigTable& table_;
  const RewardParams& reward_;
  const TrainParams& params_;
  const PushObserver& observer_;
  double beta_;
  QNetwork net_;
  QNetwork target_;
  AdamOptimizer adam_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  std::vector<EpisodeLog> log_;
  TrainingStats stats_;

  double eps_sched_ = 1.0;
  double loss_sum_ = 0.0;
  double reward_sum_ = 0.0;
  std::int64_t updates_in_ep_ = 0;
  std::int64_t pushes_in_ep_ = 0;
  std::int64_t decisions_in_ep_ = 0;
};

}  // namespace

TrainResult train_agent(std::span<const VideoStream> videos, const FeatureSource& features, const ConfigTable& table,
                        const RewardParams& reward, const TrainParams& params, const PushObserver& observer) {
  params.validate();
  reward.validate();
  if (table.empty()) throw ContractViolation("training needs a populated config table");
  if (videos.empty() && params.episodes > 0) throw ContractViolation("training needs at least one video");

  Trainer trainer(table, reward, params, features.feature_dim(), observer);
  for (std::int64_t ep = 0; ep < params.episodes; ++ep) trainer.episode(videos, features, ep);
  if (params.episodes > 0 && !trainer.warm())
    throw NotWarm(fmt::format("replay buffer never reached its warmup of {} experiences in {} episodes",
                              params.warmup, params.episodes));
  return std::move(trainer).result();
}

void write_training_log(const std::filesystem::path& path, std::span<const EpisodeLog> log) {
  std::string csv = "episode,mean_loss,mean_reward,epsilon,decisions\n";
  for (const auto& e : log)
    csv += fmt::format("{},{:.9g},{:.9g},{:.6g},{}\n", e.episode, e.mean_loss, e.mean_reward, e.epsilon, e.decisions);
  write_text_file(path, csv);
}

}  // namespace adaptq
