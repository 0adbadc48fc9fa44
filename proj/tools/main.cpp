#include <CLI11.hpp>

#include "evolgym/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"evolgym: text environments over HTTP plus an explore/learn training loop"};
  app.require_subcommand(1);

  evolgym::cli::CommonOptions options;
  std::uint64_t seed_value = 0;
  std::string out_value;

  auto add_common = [&](CLI::App* command) {
    command->add_option("--config", options.config_path, "run configuration JSON")->required();
    auto* seed = command->add_option("--seed", seed_value, "override rollout.seed");
    auto* out = command->add_option("--out", out_value, "override the output directory");
    command->callback([&options, seed, out, &seed_value, &out_value] {
      if (seed->count() > 0) options.seed = seed_value;
      if (out->count() > 0) options.out = out_value;
    });
  };

  add_common(app.add_subcommand("serve", "start the environment services"));
  add_common(app.add_subcommand("gen-instructions", "generate per-env instruction files"));
  add_common(app.add_subcommand("collect", "collect filtered expert trajectories"));
  add_common(app.add_subcommand("train-bc", "behavioral-clone the base policy"));
  add_common(app.add_subcommand("evolve", "run the exploration/learning iterations"));
  add_common(app.add_subcommand("eval", "evaluate a snapshot on the eval split"));
  add_common(app.add_subcommand("report", "render per-iteration CSV and score table"));

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  if (command == "serve") return evolgym::cli::run_serve(options);
  if (command == "gen-instructions") return evolgym::cli::run_gen_instructions(options);
  if (command == "collect") return evolgym::cli::run_collect(options);
  if (command == "train-bc") return evolgym::cli::run_train_bc(options);
  if (command == "evolve") return evolgym::cli::run_evolve(options);
  if (command == "eval") return evolgym::cli::run_eval(options);
  if (command == "report") return evolgym::cli::run_report(options);
  return 1;
}
