#include <gtest/gtest.h>

#include <numeric>

#include "adaptq/errors.hpp"
#include "adaptq/executors.hpp"
#include "test_util.hpp"

using namespace adaptq;
using adaptq::testing::make_video;
using adaptq::testing::reference_table;

namespace {

void expect_partition(const ExecutionReport& r, std::span<const VideoStream> videos) {
  Frame total = 0;
  for (const auto& v : videos) total += v.num_frames;
  EXPECT_EQ(r.frames_covered, total);
  Frame hist = 0;
  for (const auto& [label, n] : r.config_histogram) hist += n;
  EXPECT_EQ(hist, total);
  EXPECT_EQ(r.low_res_frames + r.high_res_frames, total);
  // Final windows tile every video; traces hold every invocation in order.
  for (const auto& v : r.videos) EXPECT_EQ(static_cast<Frame>(v.predicted_mask.size()), v.num_frames);
}

std::vector<VideoStream> sample_videos(double fraction = 0.1, std::uint64_t seed = 1) {
  DatasetParams p;
  p.num_videos = 4;
  p.frames_per_video = 1500;
  p.action_fraction = fraction;
  p.mean_action_len = 90;
  p.seed = seed;
  return synth_dataset(p);
}

// A Q-network that always prefers configuration `c`.
QNetwork constant_policy(std::size_t dim, std::size_t n, std::size_t c) {
  auto net = make_q_network(dim, n, 0);
  for (auto& L : net.layers()) {
    std::fill(L.weights.begin(), L.weights.end(), 0.0);
    std::fill(L.biases.begin(), L.biases.end(), 0.0);
  }
  net.layers().back().biases[c] = 1.0;
  return net;
}

void expect_identical(const ExecutionReport& a, const ExecutionReport& b) {
  ASSERT_EQ(a.videos.size(), b.videos.size());
  for (std::size_t i = 0; i < a.videos.size(); ++i) {
    EXPECT_EQ(a.videos[i].predicted_mask, b.videos[i].predicted_mask);
    EXPECT_EQ(a.videos[i].cost_seconds, b.videos[i].cost_seconds);
    EXPECT_EQ(a.videos[i].invocations, b.videos[i].invocations);
  }
  EXPECT_EQ(a.total_cost_seconds, b.total_cost_seconds);
  EXPECT_EQ(a.throughput_fps, b.throughput_fps);
  EXPECT_EQ(a.score.f1, b.score.f1);
  EXPECT_EQ(a.config_histogram, b.config_histogram);
}

// Feature = one-hot of the call index, so a linear network can follow a
// fixed configuration script.
class ScriptedSource final : public FeatureSource {
 public:
  ScriptedSource(const ApfgSim& sim, const ConfigTable& t) : direct_(sim, t) {}
  ApfgOutput observe(const VideoStream& v, Frame s, std::size_t c) const override {
    auto o = direct_.observe(v, s, c);
    o.feature.assign(feature_dim(), 0.f);
    o.feature[static_cast<std::size_t>(calls++)] = 1.f;
    return o;
  }
  std::size_t feature_dim() const override { return 8; }
  mutable int calls = 0;

 private:
  DirectFeatureSource direct_;
};

}  // namespace

TEST(RunSliding, CountsAndClipsTail) {
  const ConfigTable t(std::vector<ConfigEntry>{{{100, 4, 8}, {64.0}}});
  const ApfgSim sim;
  const DirectFeatureSource src(sim, t);
  const std::vector<VideoStream> vs = {make_video(176)};
  const auto r = run_sliding(vs, 0, src, t);
  EXPECT_EQ(r.invocations, 6);
  EXPECT_EQ(r.traces.back().start, 160);
  EXPECT_EQ(r.traces.back().span, 16);
  expect_partition(r, vs);
}

TEST(RunSliding, ThroughputEqualsProfile) {
  const auto t = reference_table(0.9, 0.9);
  const ApfgSim sim({.seed = 4});
  const DirectFeatureSource src(sim, t);
  const std::vector<VideoStream> vs = {make_video(10000, {{500, 900}}), make_video(777, {}, 1)};
  for (std::size_t c = 0; c < t.size(); ++c) {
    const auto r = run_sliding(vs, c, src, t);
    EXPECT_NEAR(r.throughput_fps / t.profile(c).throughput_fps, 1.0, 1e-6) << t.config(c).label();
    expect_partition(r, vs);
  }
  EXPECT_NEAR(run_sliding(vs, 2, src, t).throughput_fps, 285.0, 285.0 * 1e-6);
}

TEST(Executors, OracleReachesPerfectF1) {
  const auto t = reference_table();
  const ApfgSim sim({.noise_scale = 0.0});
  const DirectFeatureSource src(sim, t);
  const auto vs = sample_videos(0.2);
  const auto net = make_q_network(32, 4, 5);  // arbitrary policy
  FrameProfile fp{500.0, 1.0, 1.0, true, 0};
  const std::vector<ExecutionReport> reps = {run_sliding(vs, 0, src, t), run_rl(vs, net, src, t),
                                             run_heuristic(vs, src, t), run_frame_pp(vs, fp),
                                             run_segment_pp(vs, t.fastest(), t.most_accurate(), sim, t)};
  for (const auto& r : reps) {
    EXPECT_DOUBLE_EQ(r.score.f1, 1.0) << r.strategy;
    expect_partition(r, vs);
  }
}

TEST(RunRl, ConstantPolicyEqualsSliding) {
  const auto t = reference_table(0.85, 0.97);
  const ApfgSim sim({.seed = 8});
  const DirectFeatureSource src(sim, t);
  const auto vs = sample_videos();
  for (std::size_t c = 0; c < t.size(); ++c) {
    // The first window always uses the most accurate entry, so compare with
    // that one fixed as the constant choice.
    if (c != t.most_accurate()) continue;
    expect_identical(run_rl(vs, constant_policy(32, 4, c), src, t), run_sliding(vs, c, src, t));
  }
}

TEST(RunRl, ConstantPolicyAfterFirstWindow) {
  const auto t = reference_table(0.85, 0.97);
  const ApfgSim sim({.seed = 8});
  const DirectFeatureSource src(sim, t);
  const auto vs = sample_videos();
  const auto r = run_rl(vs, constant_policy(32, 4, 0), src, t);
  expect_partition(r, vs);
  for (const auto& tr : r.traces) EXPECT_EQ(tr.config, t.config(tr.t == 0 ? t.most_accurate() : 0).label());
}

TEST(RunRl, WalkthroughShape) {
  // Spans 64, 32, 4 and 12; the first (and slowest) entry opens every video.
  const ConfigTable t(std::vector<ConfigEntry>{{{300, 8, 8}, {64.0}}, {{250, 8, 4}, {128.0}}, {{200, 4, 1}, {256.0}}, {{150, 6, 2}, {512.0}}});
  ASSERT_EQ(t.most_accurate(), 0u);
  const ApfgSim sim;
  ScriptedSource src(sim, t);
  // After call k the network picks script[k].
  const std::vector<std::size_t> script{1, 2, 3, 0};
  QNetwork net({8, 4}, 0);
  auto& L = net.layers()[0];
  std::fill(L.weights.begin(), L.weights.end(), 0.0);
  std::fill(L.biases.begin(), L.biases.end(), 0.0);
  for (std::size_t k = 0; k < script.size(); ++k) L.weights[script[k] * 8 + k] = 1.0;

  const std::vector<VideoStream> vs = {make_video(176)};
  const auto r = run_rl(vs, net, src, t);
  EXPECT_EQ(r.frames_covered, 176);
  EXPECT_EQ(r.invocations, 5);
  const std::vector<std::pair<Frame, Frame>> windows{{0, 64}, {64, 32}, {96, 4}, {100, 12}, {112, 64}};
  ASSERT_EQ(r.traces.size(), windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    EXPECT_EQ(r.traces[i].start, windows[i].first);
    EXPECT_EQ(r.traces[i].span, windows[i].second);
  }
}

TEST(RunHeuristic, Rules) {
  const auto t = reference_table();
  const ApfgSim sim({.noise_scale = 0.0});
  const DirectFeatureSource src(sim, t);
  // All NO-ACTION: fastest from the 11th window on.
  {
    const std::vector<VideoStream> vs = {make_video(3000)};
    const auto r = run_heuristic(vs, src, t);
    for (const auto& tr : r.traces)
      EXPECT_EQ(tr.config, t.config(tr.t < 10 ? t.most_accurate() : t.fastest()).label()) << tr.t;
  }
  // All ACTION: slowest after the first window.
  {
    const std::vector<VideoStream> vs = {make_video(600, {{0, 600}})};
    const auto r = run_heuristic(vs, src, t);
    for (const auto& tr : r.traces) {
      EXPECT_TRUE(tr.prediction);
      if (tr.t > 0) EXPECT_EQ(tr.config, t.config(t.slowest()).label());
    }
  }
  // ACTION then NO-ACTION: one rank faster than the slowest after the flip.
  {
    const std::vector<VideoStream> vs = {make_video(200, {{0, 12}})};
    const auto r = run_heuristic(vs, src, t);
    ASSERT_GE(r.traces.size(), 4u);
    EXPECT_TRUE(r.traces[0].prediction);   // [0, 6) with the most accurate (300,6,1)
    EXPECT_TRUE(r.traces[1].prediction);   // [6, 12) slowest
    EXPECT_FALSE(r.traces[2].prediction);  // [12, 18) slowest, flip
    EXPECT_EQ(r.traces[2].config, t.config(t.slowest()).label());
    EXPECT_EQ(r.traces[3].config, t.config(t.fastness_order()[t.size() - 2]).label());
  }
}

TEST(RunFramePp, OneCallPerFrame) {
  const std::vector<VideoStream> vs = {make_video(100, {{10, 40}})};
  const FrameProfile perfect{200.0, 1.0, 1.0, true, 0};
  const auto r = run_frame_pp(vs, perfect);
  EXPECT_EQ(r.invocations, 100);
  EXPECT_DOUBLE_EQ(r.score.f1, 1.0);
  EXPECT_NEAR(r.throughput_fps, 200.0, 1e-9);
  expect_partition(r, vs);
}

TEST(RunFramePp, WeakClassifierOnSparseActions) {
  DatasetParams p = DatasetParams::preset("bdd");
  p.num_videos = 4;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    p.seed = seed;
    const auto vs = synth_dataset(p);
    const FrameProfile weak{700.0, 0.6, 0.6, true, seed};
    EXPECT_LT(run_frame_pp(vs, weak).score.f1, 0.5) << seed;
  }
}

TEST(RunFramePp, DefaultProfileScalesBestConfig) {
  const auto t = reference_table(0.7, 0.99);
  const auto fp = default_frame_profile(t, 3);
  EXPECT_NEAR(fp.throughput_fps, 5.9 * 115.0, 1e-9);
  EXPECT_DOUBLE_EQ(fp.tpr, 0.6);
  EXPECT_DOUBLE_EQ(fp.tnr, 0.9);
}

TEST(RunSegmentPp, Accounting) {
  // Filter never misses and never false-alarms: heavy runs on action windows only.
  const ConfigTable t(std::vector<ConfigEntry>{{{150, 4, 8}, {1282.0, 1.0, 1.0}}, {{300, 6, 1}, {115.0, 1.0, 1.0}}});
  const ApfgSim sim({.noise_scale = 0.0});
  const DirectFeatureSource src(sim, t);
  const std::vector<VideoStream> vs = {make_video(3200, {{640, 704}, {1600, 1696}})};
  const auto r = run_segment_pp(vs, 0, 1, sim, t);
  const auto pass1 = run_sliding(vs, 0, src, t);
  const double heavy_frames = 64 + 96;
  EXPECT_NEAR(r.total_cost_seconds, pass1.total_cost_seconds + heavy_frames / 115.0, 1e-9);
  EXPECT_EQ(r.invocations, 100 + 12 + 18);  // six heavy windows per filter window
  expect_partition(r, vs);

  // All-negative stream with tnr = 1: the heavy pass never runs.
  const std::vector<VideoStream> quiet = {make_video(3200)};
  const auto q = run_segment_pp(quiet, 0, 1, sim, t);
  EXPECT_EQ(q.invocations, 100);
  EXPECT_EQ(q.config_histogram[1].second, 0);
}

TEST(RunSegmentPp, FilterGatesRecall) {
  const ConfigTable t(std::vector<ConfigEntry>{{{150, 4, 8}, {1282.0, 0.2, 1.0}}, {{300, 6, 1}, {115.0, 1.0, 1.0}}});
  const ApfgSim sim({.seed = 3});
  const auto vs = sample_videos(0.3, 7);
  const auto r = run_segment_pp(vs, 0, 1, sim, t);
  EXPECT_LE(r.frame_score.recall, 0.2 + 0.05);
  EXPECT_LE(r.score.recall, 0.2 + 0.05);
}

TEST(Executors, ParallelMatchesSerial) {
  const auto t = reference_table(0.8, 0.95);
  const ApfgSim sim({.seed = 6});
  const DirectFeatureSource src(sim, t);
  const auto vs = sample_videos(0.2);
  ExecOptions par;
  par.threads = 3;
  expect_identical(run_heuristic(vs, src, t), run_heuristic(vs, src, t, par));
  const auto net = make_q_network(32, 4, 2);
  const auto a = run_rl(vs, net, src, t), b = run_rl(vs, net, src, t, par);
  expect_identical(a, b);
  EXPECT_EQ(traces_ndjson(std::vector{a}), traces_ndjson(std::vector{b}));
}

TEST(ExtractSegments, Runs) {
  const FrameMask m{0, 1, 1, 0, 0, 1, 0, 1, 1, 1};
  const auto s = extract_segments(m);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (ActionInstance{1, 3}));
  EXPECT_EQ(s[1], (ActionInstance{5, 6}));
  EXPECT_EQ(s[2], (ActionInstance{7, 10}));
  EXPECT_TRUE(extract_segments(FrameMask(5, 0)).empty());
}

TEST(Compare, SpeedupAndTargets) {
  const auto t = reference_table(0.8, 0.95);
  const ApfgSim sim({.seed = 6});
  const DirectFeatureSource src(sim, t);
  const auto vs = sample_videos(0.2);
  std::vector<ExecutionReport> reps = {run_sliding(vs, 3, src, t), run_sliding(vs, 0, src, t)};
  reps[1].strategy = "fast";
  const auto rows = compare(reps, 0.85);
  EXPECT_DOUBLE_EQ(rows[0].speedup, 1.0);
  EXPECT_NEAR(rows[1].speedup, 1282.0 / 115.0, 1e-6);

  ExecutionReport fake;
  fake.strategy = "sliding";
  fake.videos = reps[0].videos;
  fake.score.f1 = 0.857;
  fake.throughput_fps = 1.0;
  const auto r = compare(std::vector{fake}, 0.85);
  EXPECT_TRUE(r[0].meets_target);
  EXPECT_NEAR(r[0].gap, 0.007, 1e-12);
  fake.score.f1 = 0.849;
  EXPECT_FALSE(compare(std::vector{fake}, 0.85)[0].meets_target);

  auto other = reps[0];
  other.videos.pop_back();
  reps.push_back(other);
  EXPECT_THROW(compare(reps, 0.85), ContractViolation);
}

TEST(ReportsCsv, OneRowPerVideoPlusAggregate) {
  const auto t = reference_table(0.8, 0.95);
  const ApfgSim sim;
  const DirectFeatureSource src(sim, t);
  const auto vs = sample_videos();
  const std::vector<ExecutionReport> reps = {run_sliding(vs, 0, src, t), run_heuristic(vs, src, t)};
  const auto csv = reports_csv(reps);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * (4 + 1));
  EXPECT_NE(csv.find("heuristic,ALL,"), std::string::npos);
}
