#include <cstdio>
#include <map>
#include <ostream>

#include "decorr/harness.hpp"

namespace decorr::harness {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

/// Mean ± stderr across runs of one metric, grouped by a key derived from
/// the run id.
std::vector<Band> bands_for(const std::vector<CurveRow>& rows, const std::string& metric,
                            const std::function<std::string(const std::string&)>& group) {
  std::map<std::string, std::map<double, std::vector<double>>> values;
  for (const CurveRow& r : rows)
    if (r.metric == metric) values[group(r.run)][r.x].push_back(r.value);
  std::vector<Band> out;
  for (const auto& [name, by_x] : values) {
    Band b;
    b.label = name;
    for (const auto& [x, v] : by_x) {
      const MeanStderr m = mean_stderr(v);
      b.x.push_back(x);
      b.mean.push_back(m.mean);
      b.stderr_.push_back(m.stderr_);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::string group_before_run(const std::string& id) {
  const auto pos = id.find(";run=");
  return pos == std::string::npos ? id : id.substr(0, pos);
}

int slr(const ExperimentConfig& cfg, std::ostream& log) {
  const SlrReport report = run_slr(cfg);
  log << fmt("slr: correlation %g, lambda %g, %g runs\n", cfg.slr.correlation, cfg.slr.lambda,
             static_cast<double>(cfg.runs));
  log << fmt("  baseline updates to threshold     %.2f +- %.2f\n", report.baseline_updates.mean,
             report.baseline_updates.stderr_);
  log << fmt("  decorrelated updates to threshold %.2f +- %.2f\n", report.decorr_updates.mean,
             report.decorr_updates.stderr_);
  if (cfg.write_files) {
    const auto dir = cfg.out_dir / "slr";
    write_csv_file(dir / "curves.csv", report.rows);
    std::vector<Band> bands;
    for (const char* metric : {"baseline_loss", "decorrelated_loss"}) {
      auto b = bands_for(report.rows, metric, [](const std::string&) { return std::string(); });
      if (!b.empty()) {
        b.front().label = metric;
        bands.push_back(std::move(b.front()));
      }
    }
    write_svg_file(dir / "loss.svg", fmt("SLR population loss, correlation %g", cfg.slr.correlation), "update",
                   bands);
    log << "  wrote " << dir.string() << "\n";
  }
  return 0;
}

int mountain_car(const ExperimentConfig& cfg, std::ostream& log) {
  const MountainCarReport report = run_mountain_car(cfg);
  log << "mountain-car: mean episode length (+- stderr) over " << cfg.runs << " runs x "
      << cfg.mountain_car.episodes << " episodes\n";
  for (const GridPoint& g : report.grid)
    log << fmt("  alpha %-6g", g.alpha) << fmt("lambda %-8g", g.lambda)
        << fmt("%9.2f +- %.2f\n", g.episode_length.mean, g.episode_length.stderr_);
  if (cfg.write_files) {
    const auto dir = cfg.out_dir / "mountain_car";
    write_csv_file(dir / "sweep.csv", report.rows);
    std::vector<Band> bands;
    for (double lambda : cfg.mountain_car.lambda_grid) {
      Band b;
      b.label = fmt("lambda=%g", lambda);
      for (const GridPoint& g : report.grid) {
        if (g.lambda != lambda) continue;
        b.x.push_back(g.alpha);
        b.mean.push_back(g.episode_length.mean);
        b.stderr_.push_back(g.episode_length.stderr_);
      }
      bands.push_back(std::move(b));
    }
    write_svg_file(dir / "sweep.svg", "Mountain Car mean episode length", "alpha (before division by tilings)", bands);
    log << "  wrote " << dir.string() << "\n";
  }
  return 0;
}

int chain(const ExperimentConfig& cfg, std::ostream& log) {
  const ChainReport report = run_chain_eval(cfg);
  log << fmt("chain-eval: %g states, %g features, lambda %g\n", static_cast<double>(report.mdp.n_states),
             static_cast<double>(report.mdp.n_features()), cfg.chain.lambda);
  for (std::size_t r = 0; r < report.runs.size(); ++r) {
    const ChainRun& run = report.runs[r];
    log << "  run " << r
        << fmt(": final loss %.6g, minimizer loss %.6g, gap %.3g", run.final_loss, run.minimizer_loss, run.loss_gap)
        << fmt(", off-diagonal ratio %.3g, |AtA-I| %.3g\n", run.off_diagonal_ratio, run.curve.back().orthogonality);
  }
  if (cfg.write_files) {
    const auto dir = cfg.out_dir / "chain_eval";
    write_csv_file(dir / "curves.csv", report.rows);
    std::vector<Band> bands;
    for (const char* metric : {"loss_reg", "off_diagonal", "orthogonality_defect"}) {
      auto b = bands_for(report.rows, metric, [](const std::string&) { return std::string(); });
      if (!b.empty()) {
        b.front().label = metric;
        bands.push_back(std::move(b.front()));
      }
    }
    write_svg_file(dir / "curves.svg", "Chain evaluation", "step", bands);
    log << "  wrote " << dir.string() << "\n";
  }
  return 0;
}

int dqn(const ExperimentConfig& cfg, std::ostream& log) {
  const DqnReport report = run_dqn_gram(cfg);
  log << "dqn-gram: " << cfg.dqn.rows << "x" << cfg.dqn.cols << " grid, " << cfg.dqn.steps << " steps\n";
  for (const DqnRun& run : report.runs) {
    const DqnCheckpoint& last = run.checkpoints.back();
    log << fmt("  lambda %-8g", run.lambda) << "seed " << run.seed
        << fmt(": greedy return %.4f of optimal %.4f, mean |G_ij| %.4g", last.greedy_return, run.optimal_return,
               last.mean_abs_off_gram)
        << fmt(", cross-sample term %.4g -> %.4g\n", run.checkpoints.front().gram.cross_sample_term,
               last.gram.cross_sample_term);
  }
  if (cfg.write_files) {
    const auto dir = cfg.out_dir / "dqn_gram";
    write_csv_file(dir / "curves.csv", report.rows);
    write_svg_file(dir / "return.svg", "Greedy return", "step", bands_for(report.rows, "greedy_return", group_before_run));
    write_svg_file(dir / "gram.svg", "Mean |G_ij| on held-out states", "step",
                   bands_for(report.rows, "mean_abs_off_gram", group_before_run));
    log << "  wrote " << dir.string() << "\n";
  }
  return 0;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  switch (cfg.experiment) {
    case Experiment::slr: return slr(cfg, log);
    case Experiment::mountain_car: return mountain_car(cfg, log);
    case Experiment::chain_eval: return chain(cfg, log);
    case Experiment::dqn_gram: return dqn(cfg, log);
    case Experiment::verify: {
      const VerifyReport report = run_verify(cfg);
      print_verify_report(log, report);
      return report.all_passed() ? 0 : 1;
    }
  }
  return 2;
}

}  // namespace decorr::harness
