#pragma once

// Experiment configuration, seeded multi-run execution, aggregation and
// CSV/SVG emission.
//
// Seeds: run r of an experiment uses seed base + r. Streams inside a run
// are split with derive_seed(run seed, k).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "decorr/agents.hpp"
#include "decorr/decorrelation.hpp"
#include "decorr/envs.hpp"
#include "decorr/gram.hpp"

namespace decorr::harness {

enum class Experiment { slr, mountain_car, chain_eval, dqn_gram, verify };

std::string experiment_name(Experiment e);
/// Throws ConfigError for unknown names.
Experiment parse_experiment(const std::string& name);

struct ExperimentConfig {
  Experiment experiment = Experiment::verify;
  std::uint64_t seed = 0;
  std::size_t runs = 1;
  std::size_t jobs = 1;
  std::filesystem::path out_dir = "out";
  bool write_files = true;

  struct Slr {
    double correlation = 0.99;
    double learning_rate = 0.01;
    double lambda = 0.1;
    std::size_t updates = 1000;
    std::size_t record_every = 10;
    double threshold_fraction = 0.1;
  } slr;

  struct MountainCar {
    std::size_t tilings = 2;
    std::size_t tiles = 8;
    std::size_t duplicates = 2;
    std::size_t episodes = 50;
    std::size_t max_episode_steps = 5000;
    double epsilon = 0.1;
    double gamma = 0.99;
    /// Step sizes before division by the number of tilings.
    std::vector<double> alpha_grid{0.05, 0.1, 0.2, 0.4, 0.8};
    std::vector<double> lambda_grid{0.0, 1e-3, 1e-2, 1e-1};
  } mountain_car;

  struct ChainEval {
    std::size_t states = 5;
    std::size_t features = 0;  // 0 = states
    envs::FeatureMode mode = envs::FeatureMode::random_full_rank;
    double gamma = 0.9;
    double lambda = 0.1;
    std::size_t project_every = 0;
    std::size_t steps = 200000;
    double alpha0 = 0.05;
    double decay = 1e-3;
    std::size_t checkpoint_every = 1000;
  } chain;

  struct DqnGram {
    std::size_t rows = 4;
    std::size_t cols = 4;
    std::size_t steps = 50000;
    std::vector<double> lambda_grid{0.0, 1e-4, 1e-3, 1e-2};
    std::size_t hidden = 32;
    std::size_t feature_width = 32;
    std::size_t buffer = 10000;
    std::size_t batch = 32;
    std::size_t sync_period = 200;
    double learning_rate = 1e-4;
    double gamma = 0.99;
    double epsilon_final = 0.05;
    double anneal_fraction = 0.1;
    std::size_t warmup = 500;
    std::size_t max_episode_steps = 100;
    std::size_t checkpoint_every = 2500;
  } dqn;

  struct Verify {
    Fault fault = Fault::none;
  } verify;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Applies `section.key = value` assignments from a config file:
///
///   # comment
///   [run]
///   experiment = slr
///   seed = 0
///   runs = 1000
///   jobs = 4
///   out_dir = out
///   [slr]
///   correlation = 0.99
///   ...
///
/// Section names are run, slr, mountain-car, chain-eval, dqn-gram and
/// verify; keys match the field names above, lists are comma separated.
/// Unknown sections or keys raise ConfigError.
void apply_config(ExperimentConfig& cfg, std::istream& in);
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);
/// Sets one key; `section` and `key` as in the file format.
void set_option(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                const std::string& value);

std::vector<double> parse_list(const std::string& text);

// ---------------------------------------------------------------------------
// Curves and aggregation.

struct CurveRow {
  std::string run;  // run index, or an aggregate label
  double x = 0.0;
  std::string metric;
  double value = 0.0;
};

/// Header `run,x,metric,value`; reals printed with %.17g.
void write_csv(std::ostream& out, const std::vector<CurveRow>& rows);
void write_csv_file(const std::filesystem::path& path, const std::vector<CurveRow>& rows);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample standard deviation / √n, 0 when n < 2
};

MeanStderr mean_stderr(const std::vector<double>& values);

struct Band {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> stderr_;
};

/// Line plot with shaded mean ± standard error bands.
void write_svg(std::ostream& out, const std::string& title, const std::string& x_label,
               const std::vector<Band>& bands);
void write_svg_file(const std::filesystem::path& path, const std::string& title,
                    const std::string& x_label, const std::vector<Band>& bands);

/// Runs fn(0..count−1) on up to `jobs` threads. Each index is executed
/// exactly once; the first exception thrown is rethrown after all threads
/// finish.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Experiments.

struct SlrRun {
  std::vector<double> baseline_loss;   // every update, index 0 = initial
  std::vector<double> decorr_loss;
  std::size_t baseline_updates = 0;    // updates to reach the threshold
  std::size_t decorr_updates = 0;      // (updates + 1 when never reached)
};

struct SlrReport {
  std::vector<SlrRun> runs;
  MeanStderr baseline_updates;
  MeanStderr decorr_updates;
  std::vector<CurveRow> rows;
};

/// Baseline: SGD on w from w = 𝟙. Decorrelated: joint descent on (θ, A)
/// for the two-parameter loss with values xᵀAθ, from θ = 𝟙 and A = I, so
/// both learners start at the same weights and see the same samples. The
/// recorded loss is the exact population error (w − w*)ᵀΣ(w − w*).
SlrReport run_slr(const ExperimentConfig& cfg);

struct GridPoint {
  double alpha = 0.0;
  double lambda = 0.0;
  MeanStderr episode_length;  // over runs of the per-run mean length
};

struct MountainCarReport {
  std::vector<GridPoint> grid;  // alpha-major order
  std::vector<CurveRow> rows;
  /// Per-run mean episode lengths for every grid point, same order.
  std::vector<std::vector<double>> run_means;
};

/// One run of Q-learning through the decorrelating transform on tile-coded
/// Mountain Car; returns the length of each episode.
std::vector<double> mountain_car_run(const ExperimentConfig& cfg, double alpha, double lambda,
                                     std::uint64_t seed);

MountainCarReport run_mountain_car(const ExperimentConfig& cfg);

struct ChainRun {
  std::vector<agents::EvalCheckpoint> curve;
  double minimizer_loss = 0.0;
  double final_loss = 0.0;
  double off_diagonal_ratio = 0.0;   // final / initial
  double loss_gap = 0.0;             // |final − minimizer| / minimizer
};

struct ChainReport {
  MdpSpec mdp;
  std::vector<ChainRun> runs;
  std::vector<CurveRow> rows;
};

/// Fixed chain built from cfg.seed; run r samples with seed base + r.
ChainReport run_chain_eval(const ExperimentConfig& cfg);

struct DqnCheckpoint {
  std::size_t step = 0;
  double greedy_return = 0.0;
  double mean_abs_off_gram = 0.0;
  GramPenaltyReport gram;
  double feature_norm = 0.0;       // mean ‖φ‖ over held-out states
  double gradient_max_abs = 0.0;   // of the most recent update
  double sparsity[3] = {0.0, 0.0, 0.0};  // ε = 0.01, 0.1, 1.0
};

struct DqnRun {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<DqnCheckpoint> checkpoints;
  std::vector<double> episode_returns;  // discounted, in order of completion
  double optimal_return = 0.0;
  std::vector<std::size_t> behaviour_actions;  // first actions, for pairing checks
};

struct DqnReport {
  std::vector<DqnRun> runs;  // lambda-major, then run index
  std::vector<CurveRow> rows;
};

/// Single training run of DQN-Gram on the gridworld.
DqnRun dqn_gram_run(const ExperimentConfig& cfg, double lambda, std::uint64_t seed);
DqnReport run_dqn_gram(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Verification.

struct PropertyResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct Property {
  std::string name;
  std::function<PropertyResult(std::uint64_t seed)> check;
};

/// Every verification property, each listed once.
const std::vector<Property>& property_registry();

struct VerifyReport {
  std::vector<PropertyResult> results;
  bool all_passed() const;
};

/// Runs the registry with cfg.verify.fault installed on the calling thread.
VerifyReport run_verify(const ExperimentConfig& cfg);
void print_verify_report(std::ostream& out, const VerifyReport& report);

/// Dispatches on cfg.experiment, writes files under cfg.out_dir, prints a
/// summary and returns the process exit code (0 success, 1 property
/// failure).
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace decorr::harness
