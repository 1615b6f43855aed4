// adaptq: synthesize streams, train the configuration agent and compare
// executors, all driven by one experiment JSON file.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "adaptq/errors.hpp"
#include "adaptq/experiment.hpp"
#include "adaptq/serialization.hpp"

namespace {

struct Args {
  std::string spec_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::size_t parallel = 0;
  std::string checkpoint;
};

adaptq::ExperimentSpec load_spec(const Args& a) {
  auto j = adaptq::read_json_file(a.spec_path);
  // Seed and thread count are the only values the command line may override.
  if (a.seed) j["seed"] = *a.seed;
  if (a.parallel > 0) j["threads"] = a.parallel;
  return adaptq::ExperimentSpec::from_json(j, std::filesystem::path(a.spec_path).parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive configuration selection for action queries over video streams"};
  app.require_subcommand(1);
  Args args;
  app.add_option("--spec", args.spec_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  app.add_option("--out", args.out_dir, "output directory");
  app.add_option("--seed", args.seed, "override the spec's master seed");
  app.add_option("--parallel", args.parallel, "evaluate videos on N threads");

  auto* synth = app.add_subcommand("synth", "write datasets.json and print action statistics");
  auto* train = app.add_subcommand("train", "train the agent; writes checkpoint.bin and train_log.csv");
  auto* eval = app.add_subcommand("eval", "run the spec's strategies on the eval split");
  eval->add_option("--checkpoint", args.checkpoint, "checkpoint to load (default OUT/checkpoint.bin)");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate once per target accuracy");
  auto* ablate = app.add_subcommand("ablate", "retrain with each knob fixed and report throughput drops");
  auto* compare = app.add_subcommand("compare", "train, then evaluate all five strategies");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto spec = load_spec(args);
    const std::filesystem::path out = args.out_dir;
    std::filesystem::create_directories(out);
    if (*synth) adaptq::cmd_synth(spec, out, std::cout);
    if (*train) adaptq::cmd_train(spec, out, std::cout);
    if (*eval)
      adaptq::cmd_eval(spec, out, std::cout,
                       args.checkpoint.empty() ? std::nullopt
                                               : std::optional<std::filesystem::path>(args.checkpoint));
    if (*sweep) adaptq::cmd_sweep(spec, out, std::cout);
    if (*ablate) adaptq::cmd_ablate(spec, out, std::cout);
    if (*compare) adaptq::cmd_compare(spec, out, std::cout);
  } catch (const adaptq::InvalidParams& e) {
    std::cerr << "invalid experiment: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
