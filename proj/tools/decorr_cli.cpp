// Command-line front end for the experiments and the verification suite.
//
// Precedence for every setting: command-line flag, then DECORR_OUT_DIR (for
// the output directory only), then the --config file, then built-in
// defaults. Exit codes: 0 success, 1 property failure, 2 config error.

#include <array>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "decorr/errors.hpp"
#include "decorr/harness.hpp"

using decorr::harness::ExperimentConfig;

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs, runs;
  std::optional<std::uint64_t> seed;
  // Per-experiment overrides, stored as section/key/value triples.
  std::vector<std::array<std::string, 3>> overrides;
};

/// Registers a flag that becomes set_option(section, key, value).
void add_override(CLI::App* app, Flags& flags, const std::string& flag, const std::string& section,
                  const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&flags, section, key](const std::string& v) { flags.overrides.push_back({section, key, v}); }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online feature decorrelation for reinforcement learning: experiments and checks"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config, "Config file of [section] key = value lines");
  app.add_option("--out", flags.out, "Output directory (overrides DECORR_OUT_DIR)");
  app.add_option("--jobs", flags.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  app.add_option("--runs", flags.runs, "Independent runs")->check(CLI::PositiveNumber);
  app.add_option("--seed", flags.seed, "Seed base; run r uses seed + r");

  decorr::harness::Experiment chosen = decorr::harness::Experiment::verify;
  auto pick = [&](decorr::harness::Experiment e) { return [&chosen, e]() { chosen = e; }; };

  auto* verify = app.add_subcommand("verify", "Run every verification property");
  verify->callback(pick(decorr::harness::Experiment::verify));
  add_override(verify, flags, "--inject-fault", "verify", "fault",
               "none | sign-flip | terminal-mask | pair-offset");
  verify->get_option("--inject-fault")->group("");

  auto* slr = app.add_subcommand("slr", "Simple linear regression: SGD against the decorrelated learner");
  slr->callback(pick(decorr::harness::Experiment::slr));
  add_override(slr, flags, "--corr", "slr", "correlation", "Off-diagonal input correlation (0 or 0.99)");
  add_override(slr, flags, "--lambda", "slr", "lambda", "Regularizer weight");
  add_override(slr, flags, "--lr", "slr", "learning_rate", "Learning rate");
  add_override(slr, flags, "--updates", "slr", "updates", "Updates per run");

  auto* mc = app.add_subcommand("mountain-car", "Tile-coded Mountain Car sweep over alpha and lambda");
  mc->callback(pick(decorr::harness::Experiment::mountain_car));
  add_override(mc, flags, "--tilings", "mountain-car", "tilings", "Number of tilings");
  add_override(mc, flags, "--tiles", "mountain-car", "tiles", "Tiles per dimension");
  add_override(mc, flags, "--dup", "mountain-car", "duplicates", "Duplicated features");
  add_override(mc, flags, "--episodes", "mountain-car", "episodes", "Episodes per run");
  add_override(mc, flags, "--alpha-grid", "mountain-car", "alpha_grid", "Comma-separated step sizes");
  add_override(mc, flags, "--lambda-grid", "mountain-car", "lambda_grid", "Comma-separated lambdas");

  auto* chain = app.add_subcommand("chain-eval", "Policy evaluation on a chain with the decorrelating update");
  chain->callback(pick(decorr::harness::Experiment::chain_eval));
  add_override(chain, flags, "--states", "chain-eval", "states", "Number of states");
  add_override(chain, flags, "--features", "chain-eval", "features", "tabular | random | correlated");
  add_override(chain, flags, "--n-features", "chain-eval", "n_features", "Feature count (0 = states)");
  add_override(chain, flags, "--lambda", "chain-eval", "lambda", "Regularizer weight");
  add_override(chain, flags, "--project-every", "chain-eval", "project_every", "Project A every k steps (0 = never)");
  add_override(chain, flags, "--steps", "chain-eval", "steps", "Sampled transitions");

  auto* dqn = app.add_subcommand("dqn-gram", "DQN with the Gram regularizer on a gridworld");
  dqn->callback(pick(decorr::harness::Experiment::dqn_gram));
  add_override(dqn, flags, "--lambda-grid", "dqn-gram", "lambda_grid", "Comma-separated lambdas");
  add_override(dqn, flags, "--steps", "dqn-gram", "steps", "Environment steps");
  add_override(dqn, flags, "--rows", "dqn-gram", "rows", "Grid rows");
  add_override(dqn, flags, "--cols", "dqn-gram", "cols", "Grid columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg;
    if (!flags.config.empty()) decorr::harness::apply_config_file(cfg, flags.config);
    cfg.experiment = chosen;
    if (const char* env = std::getenv("DECORR_OUT_DIR"); env && *env) cfg.out_dir = env;
    if (flags.out) cfg.out_dir = *flags.out;
    if (flags.jobs) cfg.jobs = *flags.jobs;
    if (flags.runs) cfg.runs = *flags.runs;
    if (flags.seed) cfg.seed = *flags.seed;
    for (const auto& [section, key, value] : flags.overrides) decorr::harness::set_option(cfg, section, key, value);
    return decorr::harness::run_experiment(cfg, std::cout);
  } catch (const decorr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
