#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairmap/commands.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "Run configuration JSON file");
  if (config_required) opt->required();
  cmd->add_option("--set", args.overrides,
                  "Override a config value, e.g. --set train.epochs=50");
  cmd->add_option("--seed", args.seed, "Root seed override");
  cmd->add_option("--workers", args.workers, "Worker threads (0 = all cores)");
}

fairmap::config::RunConfig load(const CommonArgs& args) {
  return fairmap::config::load_run_config(args.config_path, args.overrides, args.seed,
                                          args.workers);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairmap: adversarial fairness preprocessing toolkit"};
  app.require_subcommand(1);

  CommonArgs prepare_args, train_args, sweep_args, select_args, scenario_args;
  bool resume = false;
  std::string pareto_csv, checkpoint_dir, run_dir;
  int select_k = 2;

  CLI::App* prepare = app.add_subcommand("prepare", "Materialise the dataset and encoding");
  add_common(prepare, prepare_args);

  CLI::App* train = app.add_subcommand("train", "Train one mapping ensemble");
  add_common(train, train_args);

  CLI::App* sweep = app.add_subcommand("sweep", "Random-search hyperparameter sweep");
  add_common(sweep, sweep_args);
  sweep->add_flag("--resume", resume, "Skip trials already recorded in trials/");

  CLI::App* select = app.add_subcommand("select", "Select the best Pareto trade-off");
  add_common(select, select_args);
  select->add_option("--pareto", pareto_csv, "Pareto CSV produced by sweep")->required();
  select->add_option("--k", select_k, "Number of sensitive groups")->required();

  CLI::App* scenario = app.add_subcommand("scenario", "Run the deployment scenarios");
  add_common(scenario, scenario_args);
  scenario->add_option("--checkpoint", checkpoint_dir, "Trained ensemble directory")
      ->required();

  CLI::App* report = app.add_subcommand("report", "Consolidate a run directory");
  report->add_option("--run-dir", run_dir, "Run directory to consolidate")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      fairmap::commands::cmd_prepare(load(prepare_args));
    } else if (train->parsed()) {
      fairmap::commands::cmd_train(load(train_args));
    } else if (sweep->parsed()) {
      fairmap::commands::cmd_sweep(load(sweep_args), resume);
    } else if (select->parsed()) {
      int id = fairmap::commands::cmd_select(load(select_args), pareto_csv, select_k);
      std::printf("selected model %d\n", id);
    } else if (scenario->parsed()) {
      fairmap::commands::cmd_scenario(load(scenario_args), checkpoint_dir);
    } else if (report->parsed()) {
      fairmap::commands::cmd_report(run_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
