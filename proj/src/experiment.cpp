#include "adaptq/experiment.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "adaptq/errors.hpp"
#include "adaptq/planning.hpp"
#include "adaptq/rng.hpp"
#include "adaptq/serialization.hpp"

namespace adaptq {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Stream ids for seeds derived from the master seed.
enum : std::uint64_t {
  kTrainData = 1,
  kValidationData = 2,
  kEvalData = 3,
  kApfg = 4,
  kAgent = 5,
  kFrameModel = 6,
};

constexpr std::int64_t kValidationFirstId = 100000;
constexpr std::int64_t kEvalFirstId = 200000;

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw InvalidParams(fmt::format("'{}' must be an object", where));
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw InvalidParams(fmt::format("unknown key '{}' in '{}'", key, where));
  }
}

template <class T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

SegmentLabelMode parse_label_mode(std::string_view s) {
  if (s == "fraction") return SegmentLabelMode::kFraction;
  if (s == "iou") return SegmentLabelMode::kIntervalIoU;
  throw InvalidParams(fmt::format("unknown label mode '{}'", s));
}

const std::set<std::string> kStrategies = {"sliding", "rl", "heuristic", "frame_pp", "segment_pp"};

template <class F>
auto with_source(const ExperimentSpec& spec, const ApfgSim& sim, std::span<const VideoStream> videos,
                 const ConfigTable& table, F&& f) {
  if (spec.use_cache) {
    const FeatureCache cache = precompute_features(sim, videos, table);
    return f(static_cast<const FeatureSource&>(cache));
  }
  const DirectFeatureSource direct(sim, table);
  return f(static_cast<const FeatureSource&>(direct));
}

std::vector<std::string> labels_of(const ConfigTable& table) {
  std::vector<std::string> out;
  for (const auto& e : table.entries()) out.push_back(e.config.label());
  return out;
}

json datasets_json(const Datasets& d) {
  return {{"train", dataset_to_json(d.train)},
          {"validation", dataset_to_json(d.validation)},
          {"eval", dataset_to_json(d.eval)}};
}

void print_stats(std::ostream& log, std::string_view split, const DatasetStats& s) {
  fmt::print(log, "{:<10} videos={} frames={} instances={} action_fraction={:.4f} mean_len={:.1f} std_len={:.1f} "
                  "len_range=[{}, {}]\n",
             split, s.videos, s.frames, s.instances, s.action_fraction, s.mean_action_len, s.std_action_len,
             s.min_action_len, s.max_action_len);
}

void print_rows(std::ostream& log, const std::vector<ComparisonRow>& rows, double target) {
  fmt::print(log, "{:<11} {:>12} {:>8} {:>8} {:>8}   (target {:.2f})\n", "strategy", "fps", "f1", "speedup", "meets",
             target);
  for (const auto& r : rows)
    fmt::print(log, "{:<11} {:>12.1f} {:>8.4f} {:>8.3f} {:>8}\n", r.strategy, r.throughput_fps, r.f1, r.speedup,
               r.meets_target ? "yes" : "no");
}

void write_eval_outputs(const fs::path& out, const EvalOutcome& ev, double target) {
  write_text_file(out / "reports.csv", reports_csv(ev.reports));
  write_text_file(out / "comparison.csv", comparison_csv(ev.rows, target));
  write_text_file(out / "traces.ndjson", traces_ndjson(ev.reports));
  write_text_file(out / "segments.ndjson", segments_ndjson(ev.reports));
}

void write_train_outputs(const ExperimentSpec& spec, const fs::path& out, const TrainOutcome& tr) {
  json meta = {{"configs", labels_of(tr.table)}, {"spec", spec.to_json()}};
  save_checkpoint(out / "checkpoint.bin", tr.training.network, spec.train.seed, meta);
  write_training_log(out / "train_log.csv", tr.training.log);
  write_json_file(out / "table.json", table_to_json(tr.table));
  const auto& s = tr.training.stats;
  write_json_file(out / "train_meta.json", {{"wall_clock_seconds", tr.wall_seconds},
                                            {"decisions", s.decisions},
                                            {"experiences_pushed", s.experiences_pushed},
                                            {"updates", s.updates},
                                            {"target_syncs", s.target_syncs},
                                            {"windows_flushed", s.windows_flushed}});
}

}  // namespace

ExperimentSpec ExperimentSpec::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, "spec",
             {"seed", "dataset", "table", "apfg", "reward", "train", "strategies", "targets", "knobs", "threads",
              "use_cache"});
  ExperimentSpec s;
  read(j, "seed", s.seed);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, "dataset",
               {"preset", "num_videos", "frames_per_video", "action_fraction", "mean_action_len", "std_action_len",
                "min_action_len", "max_action_len", "validation_videos", "eval_videos", "path"});
    if (d.contains("preset")) s.dataset = DatasetParams::preset(d.at("preset").get<std::string>());
    read(d, "num_videos", s.dataset.num_videos);
    read(d, "frames_per_video", s.dataset.frames_per_video);
    read(d, "action_fraction", s.dataset.action_fraction);
    read(d, "mean_action_len", s.dataset.mean_action_len);
    read(d, "std_action_len", s.dataset.std_action_len);
    read(d, "min_action_len", s.dataset.min_action_len);
    read(d, "max_action_len", s.dataset.max_action_len);
    read(d, "validation_videos", s.validation_videos);
    read(d, "eval_videos", s.eval_videos);
    if (d.contains("path")) s.dataset_path = base_dir / d.at("path").get<std::string>();
  }
  s.dataset.validate();
  if (s.validation_videos <= 0 || s.eval_videos <= 0)
    throw InvalidParams("validation and eval splits need at least one video");

  if (j.contains("table")) {
    const auto& t = j.at("table");
    check_keys(t, "table", {"preset", "path", "entries", "beta"});
    read(t, "preset", s.table_preset);
    if (t.contains("path")) {
      s.table_json = read_json_file(base_dir / t.at("path").get<std::string>());
    } else if (t.contains("entries")) {
      s.table_json = t;
    }
    if (t.contains("beta")) {
      if (!s.table_json) s.table_json = table_to_json(preset_table(s.table_preset, s.dataset.action_fraction));
      (*s.table_json)["beta"] = t.at("beta");
    }
  }

  if (j.contains("apfg")) {
    const auto& a = j.at("apfg");
    check_keys(a, "apfg", {"feature_dim", "noise_scale", "lookahead", "label_mode"});
    read(a, "feature_dim", s.apfg.feature_dim);
    read(a, "noise_scale", s.apfg.noise_scale);
    read(a, "lookahead", s.apfg.lookahead);
    if (a.contains("label_mode")) s.apfg.label_mode = parse_label_mode(a.at("label_mode").get<std::string>());
  }
  s.apfg.seed = mix_key({s.seed, kApfg});
  s.apfg.validate();

  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_keys(r, "reward", {"mode", "target", "beta", "window_frames", "metric"});
    if (r.contains("mode")) s.reward.mode = parse_reward_mode(r.at("mode").get<std::string>());
    read(r, "target", s.reward.target_accuracy);
    read(r, "beta", s.reward.beta);
    read(r, "window_frames", s.reward.window_frames);
    if (r.contains("metric")) s.reward.metric = parse_window_metric(r.at("metric").get<std::string>());
  }
  s.reward.validate();

  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, "train",
               {"episodes", "batch_size", "buffer_capacity", "warmup", "learning_rate", "gamma", "epsilon_start",
                "epsilon_end", "epsilon_decay_fraction", "target_sync_steps", "update_period"});
    read(t, "episodes", s.train.episodes);
    read(t, "batch_size", s.train.batch_size);
    read(t, "buffer_capacity", s.train.buffer_capacity);
    read(t, "warmup", s.train.warmup);
    read(t, "learning_rate", s.train.learning_rate);
    read(t, "gamma", s.train.gamma);
    read(t, "epsilon_start", s.train.epsilon_start);
    read(t, "epsilon_end", s.train.epsilon_end);
    read(t, "epsilon_decay_fraction", s.train.epsilon_decay_fraction);
    read(t, "target_sync_steps", s.train.target_sync_steps);
    read(t, "update_period", s.train.update_period);
  }
  s.train.seed = mix_key({s.seed, kAgent});
  s.train.validate();

  read(j, "strategies", s.strategies);
  for (const auto& name : s.strategies)
    if (!kStrategies.contains(name)) throw InvalidParams(fmt::format("unknown strategy '{}'", name));
  read(j, "targets", s.targets);
  if (s.targets.empty()) throw InvalidParams("at least one target accuracy is required");
  read(j, "knobs", s.knobs);
  for (const auto& k : s.knobs)
    if (!parse_knob(k)) throw InvalidParams(fmt::format("unknown knob '{}'", k));
  read(j, "threads", s.threads);
  read(j, "use_cache", s.use_cache);

  // Presets must resolve now rather than halfway through a run.
  if (!s.table_json) (void)preset_table(s.table_preset, s.dataset.action_fraction);
  return s;
}

ExperimentSpec ExperimentSpec::load(const fs::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

json ExperimentSpec::to_json() const {
  json j;
  j["seed"] = seed;
  j["dataset"] = {{"num_videos", dataset.num_videos},
                  {"frames_per_video", dataset.frames_per_video},
                  {"action_fraction", dataset.action_fraction},
                  {"mean_action_len", dataset.mean_action_len},
                  {"std_action_len", dataset.std_action_len},
                  {"min_action_len", dataset.min_action_len},
                  {"max_action_len", dataset.max_action_len},
                  {"validation_videos", validation_videos},
                  {"eval_videos", eval_videos}};
  if (dataset_path) j["dataset"]["path"] = dataset_path->string();
  if (table_json)
    j["table"] = *table_json;
  else
    j["table"] = {{"preset", table_preset}};
  j["apfg"] = {{"feature_dim", apfg.feature_dim},
               {"noise_scale", apfg.noise_scale},
               {"lookahead", apfg.lookahead},
               {"label_mode", apfg.label_mode == SegmentLabelMode::kFraction ? "fraction" : "iou"}};
  j["reward"] = {{"mode", to_string(reward.mode)},
                 {"target", reward.target_accuracy},
                 {"beta", reward.beta},
                 {"window_frames", reward.window_frames},
                 {"metric", to_string(reward.metric)}};
  j["train"] = {{"episodes", train.episodes},
                {"batch_size", train.batch_size},
                {"buffer_capacity", train.buffer_capacity},
                {"warmup", train.warmup},
                {"learning_rate", train.learning_rate},
                {"gamma", train.gamma},
                {"epsilon_start", train.epsilon_start},
                {"epsilon_end", train.epsilon_end},
                {"epsilon_decay_fraction", train.epsilon_decay_fraction},
                {"target_sync_steps", train.target_sync_steps},
                {"update_period", train.update_period}};
  j["strategies"] = strategies;
  j["targets"] = targets;
  j["knobs"] = knobs;
  j["threads"] = threads;
  j["use_cache"] = use_cache;
  return j;
}

Datasets make_datasets(const ExperimentSpec& spec) {
  if (spec.dataset_path) {
    const json j = read_json_file(*spec.dataset_path);
    return {dataset_from_json(j.at("train")), dataset_from_json(j.at("validation")),
            dataset_from_json(j.at("eval"))};
  }
  Datasets d;
  DatasetParams p = spec.dataset;
  p.seed = mix_key({spec.seed, kTrainData});
  p.first_id = 0;
  d.train = synth_dataset(p);
  p.seed = mix_key({spec.seed, kValidationData});
  p.num_videos = spec.validation_videos;
  p.first_id = kValidationFirstId;
  d.validation = synth_dataset(p);
  p.seed = mix_key({spec.seed, kEvalData});
  p.num_videos = spec.eval_videos;
  p.first_id = kEvalFirstId;
  d.eval = synth_dataset(p);
  return d;
}

ConfigTable make_table(const ExperimentSpec& spec) {
  if (spec.table_json) return table_from_json(*spec.table_json);
  return preset_table(spec.table_preset, spec.dataset.action_fraction);
}

ApfgSim make_sim(const ExperimentSpec& spec) { return ApfgSim(spec.apfg); }

ConfigTable measure_table(const ExperimentSpec& spec, const Datasets& data, const ConfigTable& table) {
  const ApfgSim sim = make_sim(spec);
  ExecOptions opts;
  opts.threads = spec.threads;
  return with_source(spec, sim, data.validation, table, [&](const FeatureSource& src) {
    return estimate_cost_metrics(data.validation, src, table, opts);
  });
}

TrainOutcome train_on(const ExperimentSpec& spec, const Datasets& data, const ConfigTable& measured) {
  const ApfgSim sim = make_sim(spec);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = with_source(spec, sim, data.train, measured, [&](const FeatureSource& src) {
    return train_agent(data.train, src, measured, spec.reward, spec.train);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(result), measured, secs};
}

EvalOutcome evaluate_on(const ExperimentSpec& spec, const Datasets& data, const ConfigTable& measured,
                        const QNetwork* net, std::ostream& log) {
  const ApfgSim sim = make_sim(spec);
  ExecOptions opts;
  opts.threads = spec.threads;
  EvalOutcome ev{{}, {}, measured, std::nullopt};
  with_source(spec, sim, data.eval, measured, [&](const FeatureSource& src) {
    for (const auto& name : spec.strategies) {
      if (name == "sliding") {
        std::size_t c = measured.most_accurate();
        try {
          c = plan_sliding_config(measured, spec.reward.target_accuracy);
        } catch (const NoFeasibleConfig& e) {
          fmt::print(log, "warning: {}; sliding falls back to the most accurate configuration\n", e.what());
        }
        ev.sliding_config = c;
        ev.reports.push_back(run_sliding(data.eval, c, src, measured, opts));
      } else if (name == "rl") {
        if (!net) throw ContractViolation("the rl strategy needs a trained network");
        ev.reports.push_back(run_rl(data.eval, *net, src, measured, opts));
      } else if (name == "heuristic") {
        ev.reports.push_back(run_heuristic(data.eval, src, measured, opts));
      } else if (name == "frame_pp") {
        ev.reports.push_back(
            run_frame_pp(data.eval, default_frame_profile(measured, mix_key({spec.seed, kFrameModel})), opts));
      } else if (name == "segment_pp") {
        ev.reports.push_back(
            run_segment_pp(data.eval, measured.fastest(), measured.most_accurate(), sim, measured, opts));
      }
    }
    return 0;
  });
  ev.rows = compare(ev.reports, spec.reward.target_accuracy);
  return ev;
}

SynthOutcome cmd_synth(const ExperimentSpec& spec, const fs::path& out, std::ostream& log) {
  SynthOutcome o;
  o.data = make_datasets(spec);
  write_json_file(out / "datasets.json", datasets_json(o.data));
  o.train_stats = dataset_stats(o.data.train);
  std::vector<VideoStream> all = o.data.train;
  all.insert(all.end(), o.data.validation.begin(), o.data.validation.end());
  all.insert(all.end(), o.data.eval.begin(), o.data.eval.end());
  o.all_stats = dataset_stats(all);
  print_stats(log, "train", o.train_stats);
  print_stats(log, "validation", dataset_stats(o.data.validation));
  print_stats(log, "eval", dataset_stats(o.data.eval));
  return o;
}

TrainOutcome cmd_train(const ExperimentSpec& spec, const fs::path& out, std::ostream& log) {
  const Datasets data = make_datasets(spec);
  const ConfigTable measured = measure_table(spec, data, make_table(spec));
  auto tr = train_on(spec, data, measured);
  write_train_outputs(spec, out, tr);
  const auto& s = tr.training.stats;
  fmt::print(log, "trained {} episodes: {} decisions, {} updates, {:.1f} s\n", spec.train.episodes, s.decisions,
             s.updates, tr.wall_seconds);
  return tr;
}

EvalOutcome cmd_eval(const ExperimentSpec& spec, const fs::path& out, std::ostream& log,
                     const std::optional<fs::path>& checkpoint) {
  const Datasets data = make_datasets(spec);
  const ConfigTable measured = measure_table(spec, data, make_table(spec));
  std::optional<QNetwork> net;
  if (std::find(spec.strategies.begin(), spec.strategies.end(), "rl") != spec.strategies.end()) {
    json header;
    net = load_checkpoint(checkpoint.value_or(out / "checkpoint.bin"), &header);
    const auto stored = header.value("params", json::object()).value("configs", json::array());
    if (stored != json(labels_of(measured)))
      throw ContractViolation("checkpoint was trained on a different configuration table");
  }
  auto ev = evaluate_on(spec, data, measured, net ? &*net : nullptr, log);
  write_eval_outputs(out, ev, spec.reward.target_accuracy);
  print_rows(log, ev.rows, spec.reward.target_accuracy);
  return ev;
}

std::vector<SweepRow> cmd_sweep(const ExperimentSpec& spec, const fs::path& out, std::ostream& log) {
  const Datasets data = make_datasets(spec);
  const ConfigTable measured = measure_table(spec, data, make_table(spec));
  std::vector<SweepRow> rows;
  for (double target : spec.targets) {
    ExperimentSpec s = spec;
    s.reward.target_accuracy = target;
    s.reward.validate();
    std::optional<TrainOutcome> tr;
    if (std::find(s.strategies.begin(), s.strategies.end(), "rl") != s.strategies.end())
      tr = train_on(s, data, measured);
    const auto ev = evaluate_on(s, data, measured, tr ? &tr->training.network : nullptr, log);
    fmt::print(log, "target {:.2f}\n", target);
    print_rows(log, ev.rows, target);
    for (const auto& r : ev.rows) rows.push_back({target, r.strategy, r.f1, r.throughput_fps, r.speedup, r.meets_target});
  }
  write_text_file(out / "sweep.csv", sweep_csv(rows));
  return rows;
}

std::vector<AblationRow> cmd_ablate(const ExperimentSpec& spec, const fs::path& out, std::ostream& log) {
  const Datasets data = make_datasets(spec);
  const ConfigTable base = make_table(spec);
  ExperimentSpec s = spec;
  s.strategies = {"rl"};

  auto run = [&](const std::string& knob, const ConfigTable& table) {
    const ConfigTable measured = measure_table(s, data, table);
    const auto tr = train_on(s, data, measured);
    const auto ev = evaluate_on(s, data, measured, &tr.training.network, log);
    AblationRow row{knob, table.size(), ev.reports.front().throughput_fps, ev.reports.front().score.f1, 0.0, 0.0};
    for (const auto& e : measured.entries()) row.max_fps = std::max(row.max_fps, e.profile.throughput_fps);
    return row;
  };

  std::vector<AblationRow> rows{run("none", base)};
  for (const auto& name : spec.knobs) rows.push_back(run(name, fix_knob(base, *parse_knob(name))));
  for (auto& r : rows) r.drop = rows.front().rl_fps > 0.0 ? 1.0 - r.rl_fps / rows.front().rl_fps : 0.0;
  for (const auto& r : rows)
    fmt::print(log, "{:<15} configs={:<3} rl_fps={:>10.1f} rl_f1={:.4f} drop={:>6.1f}%\n", r.knob, r.configs, r.rl_fps,
               r.rl_f1, 100.0 * r.drop);
  write_text_file(out / "ablation.csv", ablation_csv(rows));
  return rows;
}

EvalOutcome cmd_compare(const ExperimentSpec& spec, const fs::path& out, std::ostream& log) {
  ExperimentSpec s = spec;
  s.strategies = {"sliding", "rl", "heuristic", "frame_pp", "segment_pp"};
  const Datasets data = make_datasets(s);
  const ConfigTable measured = measure_table(s, data, make_table(s));
  const auto tr = train_on(s, data, measured);
  write_train_outputs(s, out, tr);
  auto ev = evaluate_on(s, data, measured, &tr.training.network, log);
  write_eval_outputs(out, ev, s.reward.target_accuracy);
  print_rows(log, ev.rows, s.reward.target_accuracy);
  return ev;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "target,strategy,f1,throughput_fps,speedup,meets_target\n";
  for (const auto& r : rows)
    out += fmt::format("{:.4g},{},{:.9g},{:.9g},{:.9g},{}\n", r.target, r.strategy, r.f1, r.throughput_fps, r.speedup,
                       r.meets_target ? "true" : "false");
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "knob,configs,rl_fps,rl_f1,max_fps,throughput_drop\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.knob, r.configs, r.rl_fps, r.rl_f1, r.max_fps, r.drop);
  return out;
}

}  // namespace adaptq
