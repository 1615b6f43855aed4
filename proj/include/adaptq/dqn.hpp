#pragma once

// Deep Q-learning for configuration selection: a cyclic replay buffer, a
// fully connected Q-network with hand-written backpropagation, Adam, and the
// episode loop that drives the simulated APFG.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptq/apfg_sim.hpp"
#include "adaptq/config_space.hpp"
#include "adaptq/rewards.hpp"
#include "adaptq/stream_model.hpp"

namespace adaptq {

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t warmup);

  // Overwrites the oldest entry once full.
  void push(ExperienceTuple exp);

  // Uniform with replacement. Throws NotWarm while size < max(n, warmup).
  std::vector<const ExperienceTuple*> sample(std::size_t n, std::mt19937_64& rng) const;

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t warmup() const { return warmup_; }
  bool warm() const { return storage_.size() >= warmup_; }
  std::uint64_t total_pushed() const { return pushed_; }

  // i = 0 is the oldest stored experience.
  const ExperienceTuple& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t warmup_;
  std::vector<ExperienceTuple> storage_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::uint64_t pushed_ = 0;
};

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // row-major [outputs][inputs]
  std::vector<double> biases;

  bool operator==(const DenseLayer&) const = default;
};

// Affine layers with ReLU between them; the last layer is linear.
class QNetwork {
 public:
  QNetwork() = default;
  // Weights and biases uniform in +-1/sqrt(fan_in).
  QNetwork(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

  std::vector<double> forward(std::span<const float> state) const;
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t num_actions() const { return sizes_.back(); }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const;
  // Layer by layer, weights then biases.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);

  bool operator==(const QNetwork&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<DenseLayer> layers_;
};

// Default hidden widths are 128 and 64.
QNetwork make_q_network(std::size_t feature_dim, std::size_t num_actions, std::uint64_t seed);

double huber_loss(double x, double delta = 1.0);
double huber_derivative(double x, double delta = 1.0);

// Mean Huber loss of Q(s_i, a_i) against targets[i] and its gradient, laid
// out like QNetwork::parameters().
double huber_objective(const QNetwork& net, std::span<const ExperienceTuple* const> batch,
                       std::span<const double> targets, std::vector<double>* gradient);

// y = r + gamma * max_a Q_target(s', a), or r on terminal transitions.
std::vector<double> td_targets(const QNetwork& target_net, std::span<const ExperienceTuple* const> batch,
                               double gamma);

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(QNetwork& net, std::span<const double> gradient);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainParams {
  std::int64_t episodes = 60;
  std::size_t batch_size = 1000;
  std::size_t buffer_capacity = 10000;
  std::size_t warmup = 5000;
  double learning_rate = 1e-3;
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  // Fraction of episodes over which epsilon decays linearly.
  double epsilon_decay_fraction = 0.5;
  std::size_t target_sync_steps = 500;
  std::size_t update_period = 4;
  std::uint64_t seed = 0;

  void validate() const;
  double epsilon_at(std::int64_t episode) const;
};

// One Huber/Adam step on `net` toward targets from `target_net`. Returns the
// mean loss; throws TrainingDiverged on a non-finite loss.
double train_step(QNetwork& net, const QNetwork& target_net, std::span<const ExperienceTuple* const> batch,
                  double gamma, AdamOptimizer& optimizer);

// Lowest index among the maximal q-values.
std::size_t greedy_action(std::span<const double> q_values);

// Uniform random action with probability epsilon, greedy otherwise.
std::size_t select_config(const QNetwork& net, std::span<const float> state, double epsilon, std::mt19937_64& rng);

struct EpisodeLog {
  std::int64_t episode = 0;
  double mean_loss = 0.0;
  double mean_reward = 0.0;
  double epsilon = 0.0;
  std::int64_t decisions = 0;
};

struct TrainingStats {
  std::int64_t decisions = 0;
  std::int64_t experiences_pushed = 0;
  std::int64_t updates = 0;
  std::int64_t target_syncs = 0;
  std::int64_t windows_flushed = 0;
};

struct TrainResult {
  QNetwork network;
  std::vector<EpisodeLog> log;
  TrainingStats stats;
};

// Observer hook for tests: sees every decision's experience as it is pushed.
using PushObserver = std::function<void(const ExperienceTuple&)>;

// Each episode walks all videos in a fresh random order. A video opens with
// one invocation of the most accurate configuration, which is not a decision;
// every following window is chosen by the epsilon-greedy policy. Experiences
// reach the buffer immediately (local mode) or when their reward window
// closes (aggregate mode). Gradient steps run every update_period decisions
// once the buffer is warm; the target network is synced every
// target_sync_steps gradient steps. The last decision of each video is
// terminal.
TrainResult train_agent(std::span<const VideoStream> videos, const FeatureSource& features, const ConfigTable& table,
                        const RewardParams& reward, const TrainParams& params, const PushObserver& observer = {});

// Header JSON (layer sizes, seed, metadata) followed by little-endian f32
// parameters.
void save_checkpoint(const std::filesystem::path& path, const QNetwork& net, std::uint64_t seed,
                     const nlohmann::json& metadata = {});
QNetwork load_checkpoint(const std::filesystem::path& path, nlohmann::json* header = nullptr);

void write_training_log(const std::filesystem::path& path, std::span<const EpisodeLog> log);

}  // namespace adaptq
