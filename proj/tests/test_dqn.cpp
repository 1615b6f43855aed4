#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "adaptq/dqn.hpp"
#include "adaptq/errors.hpp"
#include "test_util.hpp"

using namespace adaptq;
using adaptq::testing::make_video;

namespace {

ExperienceTuple tagged(double tag) { return {{static_cast<float>(tag)}, 0, tag, {0.f}, false}; }

std::vector<ExperienceTuple> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim, std::size_t actions) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> a(0, actions - 1);
  std::bernoulli_distribution term(0.2);
  std::vector<ExperienceTuple> out(n);
  for (auto& e : out) {
    e.state.resize(dim);
    e.next_state.resize(dim);
    for (auto& x : e.state) x = static_cast<float>(g(rng));
    for (auto& x : e.next_state) x = static_cast<float>(g(rng));
    e.action = a(rng);
    e.reward = g(rng);
    e.terminal = term(rng);
  }
  return out;
}

std::vector<const ExperienceTuple*> ptrs(const std::vector<ExperienceTuple>& v) {
  std::vector<const ExperienceTuple*> p;
  for (const auto& e : v) p.push_back(&e);
  return p;
}

// Records which video each episode visits first, second, ...
class RecordingSource final : public FeatureSource {
 public:
  RecordingSource(const ApfgSim& sim, const ConfigTable& table) : direct_(sim, table) {}
  ApfgOutput observe(const VideoStream& v, Frame start, std::size_t c) const override {
    if (start == 0) order.push_back(v.id);
    return direct_.observe(v, start, c);
  }
  std::size_t feature_dim() const override { return direct_.feature_dim(); }
  mutable std::vector<std::int64_t> order;

 private:
  DirectFeatureSource direct_;
};

TrainParams small_params(std::int64_t episodes) {
  TrainParams p;
  p.episodes = episodes;
  p.batch_size = 16;
  p.buffer_capacity = 200;
  p.warmup = 32;
  p.target_sync_steps = 10;
  p.seed = 3;
  return p;
}

}  // namespace

TEST(ReplayBuffer, CyclicEviction) {
  ReplayBuffer buf(5, 0);
  for (int i = 1; i <= 7; ++i) buf.push(tagged(i));
  ASSERT_EQ(buf.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(buf.at(i).reward, static_cast<double>(i + 3));
  EXPECT_EQ(buf.total_pushed(), 7u);
}

TEST(ReplayBuffer, SamplingContract) {
  ReplayBuffer buf(100, 10);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 9; ++i) buf.push(tagged(i));
  EXPECT_THROW(buf.sample(4, rng), NotWarm);
  buf.push(tagged(9));
  EXPECT_THROW(buf.sample(11, rng), NotWarm);
  EXPECT_EQ(buf.sample(7, rng).size(), 7u);

  std::mt19937_64 a(42), b(42);
  const auto x = buf.sample(10, a);
  const auto y = buf.sample(10, b);
  EXPECT_EQ(x, y);
  EXPECT_THROW(ReplayBuffer(0, 0), InvalidParams);
  EXPECT_THROW(ReplayBuffer(5, 6), InvalidParams);
}

TEST(ReplayBuffer, SamplesCoverWholeBuffer) {
  ReplayBuffer buf(10, 0);
  for (int i = 0; i < 10; ++i) buf.push(tagged(i));
  std::mt19937_64 rng(2);
  std::map<double, int> hits;
  for (int round = 0; round < 1000; ++round)
    for (const auto* e : buf.sample(10, rng)) ++hits[e->reward];
  ASSERT_EQ(hits.size(), 10u);
  for (const auto& [tag, n] : hits) EXPECT_NEAR(n, 1000, 150);
}

TEST(QNetwork, ZeroParametersGiveZeroQ) {
  QNetwork net({4, 8, 6, 3}, 1);
  net.set_parameters(std::vector<double>(net.parameter_count(), 0.0));
  for (double q : net.forward(std::vector<float>{1, -2, 3, 4})) EXPECT_EQ(q, 0.0);
}

TEST(QNetwork, HandComputedForwardPass) {
  QNetwork net({2, 2, 2, 2}, 0);
  auto& L = net.layers();
  L[0].weights = {1, 0, 0, -1};  // h1 = relu(x0 + 1), h2 = relu(-x1)
  L[0].biases = {1, 0};
  L[1].weights = {2, 0, 1, 1};  // g1 = relu(2 h1), g2 = relu(h1 + h2 - 3)
  L[1].biases = {0, -3};
  L[2].weights = {1, 0, 1, -1};  // q0 = g1 + 0.5, q1 = g1 - g2
  L[2].biases = {0.5, 0};
  // x = (1, -4): h = (2, 4); g = (4, 3); q = (4.5, 1).
  auto q = net.forward(std::vector<float>{1, -4});
  EXPECT_DOUBLE_EQ(q[0], 4.5);
  EXPECT_DOUBLE_EQ(q[1], 1.0);
  // x = (-3, 2): h = (0, 0); g = (0, 0); q = (0.5, 0).
  q = net.forward(std::vector<float>{-3, 2});
  EXPECT_DOUBLE_EQ(q[0], 0.5);
  EXPECT_DOUBLE_EQ(q[1], 0.0);
  EXPECT_THROW(net.forward(std::vector<float>{1, 2, 3}), ContractViolation);
}

TEST(QNetwork, OutputLayerScalingScalesQ) {
  auto net = make_q_network(6, 4, 9);
  const std::vector<float> x{0.3f, -1.f, 2.f, 0.5f, 0.f, 1.f};
  const auto q = net.forward(x);
  auto& out = net.layers().back();
  for (auto& w : out.weights) w *= 2.5;
  for (auto& b : out.biases) b *= 2.5;
  const auto q2 = net.forward(x);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(q2[i], 2.5 * q[i], 1e-12);
  EXPECT_EQ(greedy_action(q), greedy_action(q2));
  EXPECT_EQ(net.layer_sizes(), (std::vector<std::size_t>{6, 128, 64, 4}));
}

TEST(Huber, SpotValues) {
  EXPECT_DOUBLE_EQ(huber_loss(0.5), 0.125);
  EXPECT_DOUBLE_EQ(huber_loss(-0.5), 0.125);
  EXPECT_DOUBLE_EQ(huber_loss(3.0), 2.5);
  EXPECT_DOUBLE_EQ(huber_loss(-3.0), 2.5);
  EXPECT_DOUBLE_EQ(huber_loss(1.0), 0.5);
  EXPECT_DOUBLE_EQ(huber_derivative(3.0), 1.0);
  EXPECT_DOUBLE_EQ(huber_derivative(-0.25), -0.25);
}

TEST(Huber, SingleSampleObjective) {
  QNetwork net({1, 1}, 0);
  net.layers()[0].weights = {0.0};
  net.layers()[0].biases = {2.0};
  ExperienceTuple e{{1.f}, 0, 0.0, {1.f}, true};
  const std::vector<const ExperienceTuple*> batch{&e};
  EXPECT_DOUBLE_EQ(huber_objective(net, batch, std::vector<double>{1.5}, nullptr), 0.125);
  EXPECT_DOUBLE_EQ(huber_objective(net, batch, std::vector<double>{-1.0}, nullptr), 2.5);
}

TEST(TrainStep, FixedPointHasZeroLossAndGradient) {
  auto net = make_q_network(3, 2, 4);
  std::mt19937_64 rng(5);
  auto batch = random_batch(rng, 8, 3, 2);
  for (auto& e : batch) e.reward = net.forward(e.state)[e.action];
  const auto p = ptrs(batch);
  const auto y = td_targets(net, p, 0.0);
  std::vector<double> grad;
  EXPECT_NEAR(huber_objective(net, p, y, &grad), 0.0, 1e-24);
  for (double g : grad) EXPECT_EQ(g, 0.0);
  AdamOptimizer adam;
  const auto before = net.parameters();
  const QNetwork target = net;
  EXPECT_NEAR(train_step(net, target, p, 0.0, adam), 0.0, 1e-24);
  EXPECT_EQ(net.parameters(), before);
}

TEST(TrainStep, TargetsUseTargetNetwork) {
  auto target = make_q_network(2, 3, 8);
  std::mt19937_64 rng(6);
  const auto batch = random_batch(rng, 20, 2, 3);
  const auto y = td_targets(target, ptrs(batch), 0.9);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double expect = batch[i].reward;
    if (!batch[i].terminal) {
      const auto q = target.forward(batch[i].next_state);
      expect += 0.9 * *std::max_element(q.begin(), q.end());
    }
    EXPECT_DOUBLE_EQ(y[i], expect);
  }
}

TEST(TrainStep, NonFiniteLossAborts) {
  auto net = make_q_network(2, 2, 1);
  ExperienceTuple e{{1.f, 1.f}, 0, std::numeric_limits<double>::infinity(), {0.f, 0.f}, true};
  const std::vector<const ExperienceTuple*> batch{&e};
  AdamOptimizer adam;
  const QNetwork target = net;
  EXPECT_THROW(train_step(net, target, batch, 0.5, adam), TrainingDiverged);
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + trial % 4, n = 1 + trial % 3;
    QNetwork net({d, 5, 4, n}, 100 + trial);
    auto batch = random_batch(rng, 6, d, n);
    const auto p = ptrs(batch);
    const auto y = td_targets(net, p, 0.9);
    std::vector<double> grad;
    huber_objective(net, p, y, &grad);

    auto params = net.parameters();
    const double h = 1e-5;
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = params[i];
      params[i] = orig + h;
      net.set_parameters(params);
      const double up = huber_objective(net, p, y, nullptr);
      params[i] = orig - h;
      net.set_parameters(params);
      const double down = huber_objective(net, p, y, nullptr);
      params[i] = orig;
      net.set_parameters(params);
      const double fd = (up - down) / (2 * h);
      diff += (fd - grad[i]) * (fd - grad[i]);
      norm += fd * fd + grad[i] * grad[i];
    }
    ASSERT_GT(norm, 0.0);
    EXPECT_LE(std::sqrt(diff) / std::sqrt(norm), 1e-4) << "trial " << trial;
  }
}

TEST(SelectConfig, GreedyAndTies) {
  QNetwork net({2, 3}, 0);
  net.layers()[0].weights.assign(6, 0.0);
  net.layers()[0].biases = {0.2, 0.7, 0.7};
  std::mt19937_64 rng(1);
  const std::vector<float> s{0.f, 0.f};
  for (int i = 0; i < 50; ++i) EXPECT_EQ(select_config(net, s, 0.0, rng), 1u);
  net.layers()[0].biases = {0.0, 0.0, 0.0};
  EXPECT_EQ(select_config(net, s, 0.0, rng), 0u);
  EXPECT_THROW(select_config(net, s, 1.5, rng), ContractViolation);
}

TEST(SelectConfig, FullExplorationIsUniform) {
  const auto net = make_q_network(2, 4, 0);
  std::mt19937_64 rng(8);
  std::vector<int> counts(4, 0);
  const std::vector<float> s{0.1f, 0.2f};
  for (int i = 0; i < 10000; ++i) ++counts[select_config(net, s, 1.0, rng)];
  for (int c : counts) {
    EXPECT_GE(c / 10000.0, 0.23);
    EXPECT_LE(c / 10000.0, 0.27);
  }
}

TEST(TrainParams, ValidationAndSchedule) {
  TrainParams p;
  EXPECT_NO_THROW(p.validate());
  p.batch_size = p.buffer_capacity + 1;
  EXPECT_THROW(p.validate(), InvalidParams);
  p = {};
  p.gamma = 1.0;
  EXPECT_THROW(p.validate(), InvalidParams);
  p = {};
  p.episodes = 10;
  EXPECT_DOUBLE_EQ(p.epsilon_at(0), 1.0);
  EXPECT_NEAR(p.epsilon_at(1), 1.0 - 0.95 / 5, 1e-12);
  EXPECT_DOUBLE_EQ(p.epsilon_at(5), 0.05);
  EXPECT_DOUBLE_EQ(p.epsilon_at(9), 0.05);
}

TEST(TrainAgent, ZeroEpisodesReturnsInitialNetwork) {
  const auto table = adaptq::testing::reference_table(0.9, 0.9);
  const ApfgSim sim;
  const DirectFeatureSource src(sim, table);
  const std::vector<VideoStream> vs = {make_video(500, {{100, 200}})};
  auto p = small_params(0);
  const auto r = train_agent(vs, src, table, {}, p);
  EXPECT_EQ(r.network, make_q_network(32, 4, p.seed));
  EXPECT_TRUE(r.log.empty());
}

TEST(TrainAgent, DeterministicAndAccounted) {
  const auto table = adaptq::testing::reference_table(0.8, 0.95);
  const ApfgSim sim({.seed = 2});
  const DirectFeatureSource src(sim, table);
  DatasetParams dp;
  dp.num_videos = 3;
  dp.frames_per_video = 1024;
  dp.action_fraction = 0.2;
  const auto vs = synth_dataset(dp);
  for (auto mode : {RewardMode::kAggregate, RewardMode::kLocal}) {
    RewardParams rp;
    rp.mode = mode;
    rp.window_frames = 128;
    std::int64_t observed = 0;
    const auto a = train_agent(vs, src, table, rp, small_params(4), [&](const ExperienceTuple& e) {
      ++observed;
      EXPECT_LT(e.action, table.size());
      EXPECT_TRUE(std::isfinite(e.reward));
    });
    const auto b = train_agent(vs, src, table, rp, small_params(4));
    EXPECT_EQ(a.network, b.network);
    EXPECT_EQ(a.stats.experiences_pushed, a.stats.decisions);
    EXPECT_EQ(observed, a.stats.decisions);
    EXPECT_GT(a.stats.updates, 0);
    EXPECT_EQ(a.stats.target_syncs, a.stats.updates / 10);
    ASSERT_EQ(a.log.size(), 4u);
    std::int64_t total = 0;
    for (const auto& e : a.log) total += e.decisions;
    EXPECT_EQ(total, a.stats.decisions);
    if (mode == RewardMode::kAggregate) EXPECT_GE(a.stats.windows_flushed, 3 * 4);
  }
}

TEST(TrainAgent, NeverWarmAborts) {
  const auto table = adaptq::testing::reference_table();
  const ApfgSim sim;
  const DirectFeatureSource src(sim, table);
  const std::vector<VideoStream> vs = {make_video(64)};
  auto p = small_params(1);
  p.warmup = 150;
  EXPECT_THROW(train_agent(vs, src, table, {}, p), NotWarm);
}

TEST(TrainAgent, EpisodeOrdersLookUniform) {
  const auto table = adaptq::testing::reference_table();
  const ApfgSim sim;
  RecordingSource src(sim, table);
  const std::vector<VideoStream> vs = {make_video(40, {}, 0), make_video(40, {}, 1), make_video(40, {}, 2)};
  auto p = small_params(600);
  p.batch_size = 2;
  p.warmup = 4;
  p.update_period = 1000000;  // no gradient steps needed here
  train_agent(vs, src, table, {}, p);
  ASSERT_EQ(src.order.size(), 1800u);
  std::map<std::vector<std::int64_t>, int> perms;
  for (std::size_t e = 0; e < 600; ++e)
    ++perms[{src.order[3 * e], src.order[3 * e + 1], src.order[3 * e + 2]}];
  ASSERT_EQ(perms.size(), 6u);
  for (const auto& [perm, n] : perms) {
    EXPECT_GE(n, 60);
    EXPECT_LE(n, 140);
  }
}

TEST(Checkpoint, RoundTripKeepsForwardPass) {
  const auto net = make_q_network(5, 3, 77);
  const auto path = std::filesystem::temp_directory_path() / "adaptq_ckpt_test.bin";
  save_checkpoint(path, net, 77, {{"note", "x"}});
  nlohmann::json header;
  const auto back = load_checkpoint(path, &header);
  std::filesystem::remove(path);
  EXPECT_EQ(header.at("seed").get<std::uint64_t>(), 77u);
  EXPECT_EQ(header.at("params").at("note"), "x");
  EXPECT_EQ(back.layer_sizes(), net.layer_sizes());
  const std::vector<float> x{0.1f, 0.2f, -0.3f, 1.f, 0.f};
  const auto q1 = net.forward(x), q2 = back.forward(x);
  for (std::size_t i = 0; i < q1.size(); ++i) EXPECT_NEAR(q1[i], q2[i], 1e-5);
}
