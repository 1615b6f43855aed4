#include "adaptq/executors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "adaptq/errors.hpp"
#include "adaptq/rng.hpp"

namespace adaptq {

namespace {

// Per-video working state shared by every executor.
struct VideoRun {
  VideoResult result;
  std::vector<Frame> frames_per_bin;  // indexed like the report histogram
  Frame low = 0;
  Frame high = 0;
  std::vector<DecisionTrace> traces;
};

class Recorder {
 public:
  Recorder(const VideoStream& video, std::size_t bins, bool traces) : video_(video), traces_(traces) {
    run_.result.id = video.id;
    run_.result.num_frames = video.num_frames;
    run_.result.predicted_mask.assign(static_cast<std::size_t>(video.num_frames), 0);
    run_.result.reference_mask.assign(static_cast<std::size_t>(video.num_frames), 0);
    run_.frames_per_bin.assign(bins, 0);
  }

  // Every invocation costs; `final` windows also write the mask.
  void invocation(Window w, double cost, bool prediction, std::string_view config) {
    run_.result.cost_seconds += cost;
    if (traces_)
      run_.traces.push_back({video_.id, run_.result.invocations, w.start, w.length(), std::string(config), prediction,
                             std::nullopt});
    ++run_.result.invocations;
  }

  void final_window(Window w, bool reference, bool prediction, std::size_t bin, bool low_res) {
    if (w.start != covered_)
      throw ContractViolation(fmt::format("video {}: window starts at {} but coverage ends at {}", video_.id, w.start,
                                          covered_));
    std::fill(run_.result.predicted_mask.begin() + w.start, run_.result.predicted_mask.begin() + w.end,
              prediction ? 1 : 0);
    std::fill(run_.result.reference_mask.begin() + w.start, run_.result.reference_mask.begin() + w.end,
              reference ? 1 : 0);
    run_.frames_per_bin[bin] += w.length();
    (low_res ? run_.low : run_.high) += w.length();
    covered_ = w.end;
  }

  VideoRun finish() && {
    if (covered_ != video_.num_frames)
      throw ContractViolation(
          fmt::format("video {}: windows cover {} of {} frames", video_.id, covered_, video_.num_frames));
    run_.result.confusion = confusion(run_.result.predicted_mask, run_.result.reference_mask);
    run_.result.frame_confusion = confusion(run_.result.predicted_mask, ground_truth_mask(video_));
    return std::move(run_);
  }

 private:
  const VideoStream& video_;
  bool traces_;
  VideoRun run_;
  Frame covered_ = 0;
};

using VideoFn = std::function<VideoRun(const VideoStream&)>;

ExecutionReport assemble(std::string strategy, std::span<const VideoStream> videos, std::vector<std::string> bins,
                         const VideoFn& fn, const ExecOptions& opts) {
  std::vector<VideoRun> runs(videos.size());
  const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(videos.size(), 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < videos.size(); ++i) runs[i] = fn(videos[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = next++; i < videos.size(); i = next++) runs[i] = fn(videos[i]);
        } catch (...) {
          errors[t] = std::current_exception();
          next = videos.size();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  ExecutionReport rep;
  rep.strategy = std::move(strategy);
  std::vector<Frame> hist(bins.size(), 0);
  Confusion frame_conf;
  for (auto& run : runs) {
    rep.total_cost_seconds += run.result.cost_seconds;
    rep.frames_covered += run.result.num_frames;
    rep.invocations += run.result.invocations;
    rep.confusion += run.result.confusion;
    frame_conf += run.result.frame_confusion;
    for (std::size_t b = 0; b < hist.size(); ++b) hist[b] += run.frames_per_bin[b];
    rep.low_res_frames += run.low;
    rep.high_res_frames += run.high;
    if (opts.record_traces)
      rep.traces.insert(rep.traces.end(), std::make_move_iterator(run.traces.begin()),
                        std::make_move_iterator(run.traces.end()));
    rep.videos.push_back(std::move(run.result));
  }
  rep.throughput_fps =
      rep.total_cost_seconds > 0.0 ? static_cast<double>(rep.frames_covered) / rep.total_cost_seconds : 0.0;
  rep.score = f1_from_confusion(rep.confusion);
  rep.frame_score = f1_from_confusion(frame_conf);
  for (std::size_t b = 0; b < bins.size(); ++b) rep.config_histogram.emplace_back(std::move(bins[b]), hist[b]);
  return rep;
}

std::vector<std::string> table_labels(const ConfigTable& table) {
  std::vector<std::string> out;
  for (const auto& e : table.entries()) out.push_back(e.config.label());
  return out;
}

// Chooses the configuration of the next window from the output of the last.
using Policy = std::function<std::size_t(const ApfgOutput&, std::size_t current)>;

VideoRun run_policy(const VideoStream& video, const FeatureSource& features, const ConfigTable& table,
                    std::size_t first, const Policy& policy, bool traces) {
  Recorder rec(video, table.size(), traces);
  std::size_t c = first;
  Frame pos = 0;
  while (pos < video.num_frames) {
    const auto out = features.observe(video, pos, c);
    const auto& cfg = table.config(c);
    rec.invocation(out.window, out.cost_seconds, out.prediction, cfg.label());
    rec.final_window(out.window, out.ground_label, out.prediction, c, is_low_resolution(table, cfg.resolution));
    pos = out.window.end;
    if (pos < video.num_frames) c = policy(out, c);
  }
  return std::move(rec).finish();
}

}  // namespace

bool is_low_resolution(const ConfigTable& table, int resolution) {
  if (table.empty()) return false;
  int lo = table.config(0).resolution, hi = lo;
  for (const auto& e : table.entries()) {
    lo = std::min(lo, e.config.resolution);
    hi = std::max(hi, e.config.resolution);
  }
  return 2 * resolution < lo + hi;
}

ExecutionReport run_sliding(std::span<const VideoStream> videos, std::size_t config, const FeatureSource& features,
                            const ConfigTable& table, const ExecOptions& opts) {
  if (config >= table.size()) throw ContractViolation(fmt::format("config index {} out of range", config));
  const Policy keep = [](const ApfgOutput&, std::size_t c) { return c; };
  return assemble(
      "sliding", videos, table_labels(table),
      [&](const VideoStream& v) { return run_policy(v, features, table, config, keep, opts.record_traces); }, opts);
}

ExecutionReport run_rl(std::span<const VideoStream> videos, const QNetwork& net, const FeatureSource& features,
                       const ConfigTable& table, const ExecOptions& opts) {
  if (net.input_dim() != features.feature_dim() || net.num_actions() != table.size())
    throw ContractViolation(fmt::format("network [{} -> {}] does not fit {} features and {} configurations",
                                        net.input_dim(), net.num_actions(), features.feature_dim(), table.size()));
  const Policy greedy = [&](const ApfgOutput& out, std::size_t) { return greedy_action(net.forward(out.feature)); };
  return assemble(
      "rl", videos, table_labels(table),
      [&](const VideoStream& v) {
        return run_policy(v, features, table, table.most_accurate(), greedy, opts.record_traces);
      },
      opts);
}

ExecutionReport run_heuristic(std::span<const VideoStream> videos, const FeatureSource& features,
                              const ConfigTable& table, const ExecOptions& opts) {
  const auto& order = table.fastness_order();
  return assemble(
      "heuristic", videos, table_labels(table),
      [&](const VideoStream& v) {
        bool last_action = false;
        int quiet = 0;
        const Policy rules = [&](const ApfgOutput& out, std::size_t c) {
          if (out.prediction) {
            last_action = true;
            quiet = 0;
            return table.slowest();
          }
          ++quiet;
          const bool flip = last_action;
          last_action = false;
          if (quiet >= 10) return table.fastest();
          if (flip) {
            const std::size_t rank = table.fastness_rank(c);
            return rank > 0 ? order[rank - 1] : c;
          }
          return c;
        };
        return run_policy(v, features, table, table.most_accurate(), rules, opts.record_traces);
      },
      opts);
}

FrameProfile default_frame_profile(const ConfigTable& table, std::uint64_t seed) {
  FrameProfile p;
  p.throughput_fps = kFrameModelSpeedup * table.profile(table.most_accurate()).throughput_fps;
  p.tpr = 0.6;
  p.tnr = 0.9;
  p.seed = seed;
  return p;
}

ExecutionReport run_frame_pp(std::span<const VideoStream> videos, const FrameProfile& profile,
                             const ExecOptions& opts) {
  if (!(profile.throughput_fps > 0.0)) throw InvalidParams("frame profile needs a positive throughput");
  const double cost = 1.0 / profile.throughput_fps;
  return assemble(
      "frame_pp", videos, {"frame"},
      [&](const VideoStream& v) {
        Recorder rec(v, 1, opts.record_traces);
        const FrameMask gt = ground_truth_mask(v);
        for (Frame n = 0; n < v.num_frames; ++n) {
          const bool label = gt[static_cast<std::size_t>(n)] != 0;
          CounterRng rng(mix_key({profile.seed, static_cast<std::uint64_t>(v.id), 0x4652414dULL,
                                  static_cast<std::uint64_t>(n)}));
          const bool correct = rng.uniform() < (label ? profile.tpr : profile.tnr);
          const bool pred = correct ? label : !label;
          rec.invocation({n, n + 1}, cost, pred, "frame");
          rec.final_window({n, n + 1}, label, pred, 0, !profile.high_resolution);
        }
        return std::move(rec).finish();
      },
      opts);
}

ExecutionReport run_segment_pp(std::span<const VideoStream> videos, std::size_t filter, std::size_t heavy,
                               const ApfgSim& sim, const ConfigTable& table, const ExecOptions& opts) {
  if (filter >= table.size() || heavy >= table.size())
    throw ContractViolation("segment-PP configuration index out of range");
  const auto& fc = table.config(filter);
  const auto& hc = table.config(heavy);
  const bool f_low = is_low_resolution(table, fc.resolution);
  const bool h_low = is_low_resolution(table, hc.resolution);
  return assemble(
      "segment_pp", videos, table_labels(table),
      [&](const VideoStream& v) {
        Recorder rec(v, table.size(), opts.record_traces);
        Frame pos = 0;
        while (pos < v.num_frames) {
          const auto f = sim.invoke(v, pos, table, filter);
          rec.invocation(f.window, f.cost_seconds, f.prediction, fc.label());
          if (!f.prediction) {
            rec.final_window(f.window, f.ground_label, false, filter, f_low);
          } else {
            for (Frame p = f.window.start; p < f.window.end;) {
              const auto h = sim.invoke(v, p, table, heavy, f.window.end);
              rec.invocation(h.window, h.cost_seconds, h.prediction, hc.label());
              rec.final_window(h.window, h.ground_label, h.prediction, heavy, h_low);
              p = h.window.end;
            }
          }
          pos = f.window.end;
        }
        return std::move(rec).finish();
      },
      opts);
}

std::vector<ActionInstance> extract_segments(MaskView mask) {
  std::vector<ActionInstance> out;
  const auto n = static_cast<Frame>(mask.size());
  for (Frame i = 0; i < n;) {
    if (!mask[static_cast<std::size_t>(i)]) {
      ++i;
      continue;
    }
    Frame j = i;
    while (j < n && mask[static_cast<std::size_t>(j)]) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<ComparisonRow> compare(std::span<const ExecutionReport> reports, double target) {
  if (reports.empty()) return {};
  auto ids = [](const ExecutionReport& r) {
    std::set<std::int64_t> s;
    for (const auto& v : r.videos) s.insert(v.id);
    return s;
  };
  const auto ref_ids = ids(reports.front());
  for (const auto& r : reports)
    if (ids(r) != ref_ids)
      throw ContractViolation(fmt::format("report '{}' covers a different video set", r.strategy));

  const ExecutionReport* base = &reports.front();
  for (const auto& r : reports)
    if (r.strategy == "sliding") {
      base = &r;
      break;
    }
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    ComparisonRow row;
    row.strategy = r.strategy;
    row.throughput_fps = r.throughput_fps;
    row.f1 = r.score.f1;
    row.meets_target = r.score.f1 >= target;
    row.speedup = base->throughput_fps > 0.0 ? r.throughput_fps / base->throughput_fps : 0.0;
    row.gap = std::abs(r.score.f1 - target);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string comparison_csv(std::span<const ComparisonRow> rows, double target) {
  std::string out = "strategy,target,throughput_fps,f1,meets_target,speedup,gap\n";
  for (const auto& r : rows)
    out += fmt::format("{},{:.4g},{:.9g},{:.9g},{},{:.9g},{:.9g}\n", r.strategy, target, r.throughput_fps, r.f1,
                       r.meets_target ? "true" : "false", r.speedup, r.gap);
  return out;
}

std::string reports_csv(std::span<const ExecutionReport> reports) {
  std::string out =
      "strategy,video,frames,invocations,cost_seconds,throughput_fps,precision,recall,f1,frame_f1,low_res_frames,"
      "high_res_frames\n";
  for (const auto& r : reports) {
    for (const auto& v : r.videos) {
      const auto s = f1_from_confusion(v.confusion);
      const auto fs = f1_from_confusion(v.frame_confusion);
      out += fmt::format("{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},,\n", r.strategy, v.id, v.num_frames,
                         v.invocations, v.cost_seconds,
                         v.cost_seconds > 0 ? static_cast<double>(v.num_frames) / v.cost_seconds : 0.0, s.precision,
                         s.recall, s.f1, fs.f1);
    }
    out += fmt::format("{},ALL,{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{},{}\n", r.strategy, r.frames_covered,
                       r.invocations, r.total_cost_seconds, r.throughput_fps, r.score.precision, r.score.recall,
                       r.score.f1, r.frame_score.f1, r.low_res_frames, r.high_res_frames);
  }
  return out;
}

std::string traces_ndjson(std::span<const ExecutionReport> reports) {
  std::string out;
  for (const auto& r : reports)
    for (const auto& t : r.traces) {
      nlohmann::json j = {{"strategy", r.strategy}, {"video", t.video},   {"t", t.t},
                          {"start", t.start},       {"span", t.span},     {"config", t.config},
                          {"prediction", t.prediction ? "ACTION" : "NO-ACTION"}};
      if (t.reward) j["reward"] = *t.reward;
      out += j.dump();
      out += '\n';
    }
  return out;
}

std::string segments_ndjson(std::span<const ExecutionReport> reports) {
  std::string out;
  for (const auto& r : reports)
    for (const auto& v : r.videos) {
      nlohmann::json segs = nlohmann::json::array();
      for (const auto& s : extract_segments(v.predicted_mask)) segs.push_back({s.start, s.end});
      out += nlohmann::json{{"strategy", r.strategy}, {"video", v.id}, {"segments", std::move(segs)}}.dump();
      out += '\n';
    }
  return out;
}

}  // namespace adaptq
