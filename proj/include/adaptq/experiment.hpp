#pragma once

// Experiment harness: one JSON document describes datasets, configuration
// table, simulator, reward, training and evaluation; each command is a
// deterministic function of that document and its seed.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptq/apfg_sim.hpp"
#include "adaptq/config_space.hpp"
#include "adaptq/dqn.hpp"
#include "adaptq/executors.hpp"
#include "adaptq/rewards.hpp"
#include "adaptq/stream_model.hpp"

namespace adaptq {

struct ExperimentSpec {
  std::uint64_t seed = 0;

  DatasetParams dataset;  // training split; its seed is derived from `seed`
  std::int64_t validation_videos = 4;
  std::int64_t eval_videos = 8;
  std::optional<std::filesystem::path> dataset_path;  // {train, validation, eval}

  std::string table_preset = "reference";
  std::optional<nlohmann::json> table_json;  // inline or loaded table, wins over the preset

  ApfgParams apfg;
  RewardParams reward;
  TrainParams train;

  std::vector<std::string> strategies = {"sliding", "rl", "heuristic", "frame_pp", "segment_pp"};
  std::vector<double> targets = {0.75, 0.80, 0.85};
  std::vector<std::string> knobs = {"resolution", "segment_length", "sampling_rate"};

  std::size_t threads = 1;
  bool use_cache = false;

  // Unknown keys are rejected so typos do not silently fall back to defaults.
  static ExperimentSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct Datasets {
  std::vector<VideoStream> train;
  std::vector<VideoStream> validation;
  std::vector<VideoStream> eval;
};

Datasets make_datasets(const ExperimentSpec& spec);
ConfigTable make_table(const ExperimentSpec& spec);
ApfgSim make_sim(const ExperimentSpec& spec);

struct SynthOutcome {
  Datasets data;
  DatasetStats train_stats;
  DatasetStats all_stats;
};

struct TrainOutcome {
  TrainResult training;
  ConfigTable table;  // with validation measurements
  double wall_seconds = 0.0;
};

struct EvalOutcome {
  std::vector<ExecutionReport> reports;
  std::vector<ComparisonRow> rows;
  ConfigTable table;
  std::optional<std::size_t> sliding_config;
};

struct SweepRow {
  double target = 0.0;
  std::string strategy;
  double f1 = 0.0;
  double throughput_fps = 0.0;
  double speedup = 0.0;
  bool meets_target = false;
};

struct AblationRow {
  std::string knob;  // "none" for the full table
  std::size_t configs = 0;
  double rl_fps = 0.0;
  double rl_f1 = 0.0;
  double max_fps = 0.0;  // fastest configuration left in the table
  double drop = 0.0;     // 1 - rl_fps / baseline rl_fps
};

// Profiles `table` on the spec's validation split.
ConfigTable measure_table(const ExperimentSpec& spec, const Datasets& data, const ConfigTable& table);

TrainOutcome train_on(const ExperimentSpec& spec, const Datasets& data, const ConfigTable& measured);
EvalOutcome evaluate_on(const ExperimentSpec& spec, const Datasets& data, const ConfigTable& measured,
                        const QNetwork* net, std::ostream& log);

// Commands write into `out` and report progress to `log`.
SynthOutcome cmd_synth(const ExperimentSpec& spec, const std::filesystem::path& out, std::ostream& log);
TrainOutcome cmd_train(const ExperimentSpec& spec, const std::filesystem::path& out, std::ostream& log);
// Reads out/checkpoint.bin unless `checkpoint` is given.
EvalOutcome cmd_eval(const ExperimentSpec& spec, const std::filesystem::path& out, std::ostream& log,
                     const std::optional<std::filesystem::path>& checkpoint = std::nullopt);
std::vector<SweepRow> cmd_sweep(const ExperimentSpec& spec, const std::filesystem::path& out, std::ostream& log);
std::vector<AblationRow> cmd_ablate(const ExperimentSpec& spec, const std::filesystem::path& out, std::ostream& log);
// Train followed by a five-strategy evaluation.
EvalOutcome cmd_compare(const ExperimentSpec& spec, const std::filesystem::path& out, std::ostream& log);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace adaptq
