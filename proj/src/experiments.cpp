#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "decorr/errors.hpp"
#include "decorr/harness.hpp"
#include "decorr/oracle.hpp"

namespace decorr::harness {

namespace {

std::string label(const char* prefix, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%g", prefix, value);
  return buf;
}

double population_error(const std::array<double, 2>& w, const Matrix& sigma) {
  const double e0 = w[0] - envs::kSlrWeights[0];
  const double e1 = w[1] - envs::kSlrWeights[1];
  return sigma(0, 0) * e0 * e0 + 2.0 * sigma(0, 1) * e0 * e1 + sigma(1, 1) * e1 * e1;
}

std::size_t first_below(const std::vector<double>& curve, double threshold) {
  for (std::size_t k = 0; k < curve.size(); ++k)
    if (curve[k] <= threshold) return k;
  return curve.size();
}

}  // namespace

SlrReport run_slr(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& p = cfg.slr;
  const Matrix sigma = envs::slr_covariance(p.correlation);
  SlrReport report;
  report.runs.resize(cfg.runs);

  parallel_for(cfg.runs, cfg.jobs, [&](std::size_t r) {
    Rng rng(cfg.seed + r);
    SlrRun& run = report.runs[r];
    std::array<double, 2> w{1.0, 1.0};
    Matrix a = Matrix::identity(2);
    Vector theta{1.0, 1.0};
    auto effective = [&] {
      const Vector v = matvec(a, theta);
      return std::array<double, 2>{v[0], v[1]};
    };
    run.baseline_loss.push_back(population_error(w, sigma));
    run.decorr_loss.push_back(population_error(effective(), sigma));
    WeightedTransitionSet one;
    one.gamma = 0.0;
    one.weights = {1.0};
    one.transitions.resize(1);
    one.transitions[0].terminal = true;
    for (std::size_t k = 0; k < p.updates; ++k) {
      const envs::SlrSample s = envs::slr_sample(rng, sigma);
      const double delta = s.y - (w[0] * s.x[0] + w[1] * s.x[1]);
      w[0] += p.learning_rate * delta * s.x[0];
      w[1] += p.learning_rate * delta * s.x[1];

      Transition& t = one.transitions[0];
      t.phi.assign(s.x.begin(), s.x.end());
      t.phi_next = t.phi;
      t.reward = s.y;
      const FullGradients g = full_gradients(theta, TransformMatrix(a), one, p.lambda);
      for (std::size_t i = 0; i < 2; ++i) theta[i] -= p.learning_rate * g.theta[i];
      Matrix step = g.a;
      step *= p.learning_rate;
      a -= step;

      run.baseline_loss.push_back(population_error(w, sigma));
      run.decorr_loss.push_back(population_error(effective(), sigma));
    }
  });

  // Both learners start from the same loss, so the threshold is shared.
  double initial = 0.0;
  for (const SlrRun& run : report.runs) initial += run.baseline_loss.front();
  const double threshold = p.threshold_fraction * initial / static_cast<double>(cfg.runs);

  std::vector<double> base_updates, decorr_updates;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    SlrRun& run = report.runs[r];
    run.baseline_updates = first_below(run.baseline_loss, threshold);
    run.decorr_updates = first_below(run.decorr_loss, threshold);
    base_updates.push_back(static_cast<double>(run.baseline_updates));
    decorr_updates.push_back(static_cast<double>(run.decorr_updates));
    const std::string id = std::to_string(r);
    for (std::size_t k = 0; k <= p.updates; k += p.record_every) {
      report.rows.push_back({id, static_cast<double>(k), "baseline_loss", run.baseline_loss[k]});
      report.rows.push_back({id, static_cast<double>(k), "decorrelated_loss", run.decorr_loss[k]});
    }
    report.rows.push_back({id, 0.0, "baseline_updates_to_threshold", base_updates.back()});
    report.rows.push_back({id, 0.0, "decorrelated_updates_to_threshold", decorr_updates.back()});
  }
  report.baseline_updates = mean_stderr(base_updates);
  report.decorr_updates = mean_stderr(decorr_updates);
  return report;
}

std::vector<double> mountain_car_run(const ExperimentConfig& cfg, double alpha, double lambda,
                                     std::uint64_t seed) {
  const auto& p = cfg.mountain_car;
  const envs::TileCoderSpec plain = envs::TileCoderSpec::mountain_car(p.tilings, p.tiles, {});
  const envs::TileCoderSpec spec =
      envs::TileCoderSpec::mountain_car(p.tilings, p.tiles, envs::spread_duplication_indices(plain, p.duplicates));
  const std::size_t state_dim = spec.dim();
  const std::size_t n_actions = envs::kMountainCarActions;
  const std::size_t dim = state_dim * n_actions;
  // The update moves A𝟙 by step·dim·δ per active feature, so this step
  // reproduces tile-coded Q-learning with step alpha/tilings at λ = 0.
  const double step = alpha / static_cast<double>(p.tilings) / static_cast<double>(dim);
  agents::SparseDecorLearner learner(dim, step, lambda);

  Rng rng(seed);
  std::vector<double> lengths;
  std::vector<std::size_t> active, sa;
  auto stacked = [&](const std::vector<std::size_t>& state_active, std::size_t action) {
    sa.clear();
    for (std::size_t i : state_active) sa.push_back(action * state_dim + i);
    return std::span<const std::size_t>(sa);
  };
  std::array<double, envs::kMountainCarActions> q{}, q_next{};
  auto values = [&](const std::vector<std::size_t>& state_active, std::array<double, 3>& out) {
    for (std::size_t a = 0; a < n_actions; ++a) out[a] = learner.value(stacked(state_active, a));
  };

  for (std::size_t episode = 0; episode < p.episodes; ++episode) {
    envs::MountainCarState state = envs::mountain_car_reset(rng);
    const double s0[] = {state.position, state.velocity};
    active = envs::active_features(spec, s0);
    values(active, q);
    std::size_t action = agents::epsilon_greedy(q, p.epsilon, rng);
    std::size_t steps = 0;
    while (true) {
      const envs::MountainCarStep out = envs::mountain_car_step(state, static_cast<int>(action));
      ++steps;
      const double current = q[action];
      if (out.done) {
        learner.update(stacked(active, action), out.reward - current);
        break;
      }
      const double s1[] = {out.state.position, out.state.velocity};
      std::vector<std::size_t> next_active = envs::active_features(spec, s1);
      values(next_active, q_next);
      const std::size_t next_action = agents::epsilon_greedy(q_next, p.epsilon, rng);
      const double best = *std::max_element(q_next.begin(), q_next.end());
      learner.update(stacked(active, action), out.reward + p.gamma * best - current);
      if (steps >= p.max_episode_steps) break;
      state = out.state;
      active = std::move(next_active);
      action = next_action;
      values(active, q);
    }
    lengths.push_back(static_cast<double>(steps));
  }
  return lengths;
}

MountainCarReport run_mountain_car(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& p = cfg.mountain_car;
  const std::size_t n_alpha = p.alpha_grid.size(), n_lambda = p.lambda_grid.size();
  const std::size_t points = n_alpha * n_lambda;
  std::vector<std::vector<double>> lengths(points * cfg.runs);

  parallel_for(points * cfg.runs, cfg.jobs, [&](std::size_t k) {
    const std::size_t point = k / cfg.runs, r = k % cfg.runs;
    const double alpha = p.alpha_grid[point / n_lambda];
    const double lambda = p.lambda_grid[point % n_lambda];
    lengths[k] = mountain_car_run(cfg, alpha, lambda, cfg.seed + r);
  });

  MountainCarReport report;
  for (std::size_t point = 0; point < points; ++point) {
    GridPoint g;
    g.alpha = p.alpha_grid[point / n_lambda];
    g.lambda = p.lambda_grid[point % n_lambda];
    std::vector<double> means;
    std::vector<double> per_episode(p.episodes, 0.0);
    for (std::size_t r = 0; r < cfg.runs; ++r) {
      const auto& run = lengths[point * cfg.runs + r];
      double total = 0.0;
      for (std::size_t e = 0; e < run.size(); ++e) {
        total += run[e];
        per_episode[e] += run[e] / static_cast<double>(cfg.runs);
      }
      means.push_back(total / static_cast<double>(run.size()));
    }
    g.episode_length = mean_stderr(means);
    report.run_means.push_back(means);
    report.grid.push_back(g);

    const std::string id = label("alpha=", g.alpha) + label(";lambda=", g.lambda);
    report.rows.push_back({"sweep", g.alpha, label("mean_length;lambda=", g.lambda), g.episode_length.mean});
    report.rows.push_back({"sweep", g.alpha, label("stderr_length;lambda=", g.lambda), g.episode_length.stderr_});
    for (std::size_t e = 0; e < p.episodes; ++e)
      report.rows.push_back({id, static_cast<double>(e), "mean_episode_length", per_episode[e]});
  }
  // The sweep rows are emitted lambda-by-lambda so x increases within each metric.
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const CurveRow& a, const CurveRow& b) {
    if (a.run != b.run) return a.run < b.run;
    if (a.metric != b.metric) return a.metric < b.metric;
    return a.x < b.x;
  });
  return report;
}

ChainReport run_chain_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& p = cfg.chain;
  ChainReport report;
  report.mdp = envs::chain_mdp(p.states, p.gamma, p.mode, cfg.seed, p.features);
  const WeightedTransitionSet data = WeightedTransitionSet::from_mdp(report.mdp);
  const TransformMatrix minimizer = construct_minimizer(report.mdp);
  const double minimizer_loss = loss_reg(minimizer, data, p.lambda).total();
  report.runs.resize(cfg.runs);

  parallel_for(cfg.runs, cfg.jobs, [&](std::size_t r) {
    agents::AgentConfig agent;
    agent.lambda = p.lambda;
    agent.gamma = p.gamma;
    agent.project_every = p.project_every;
    agent.seed = cfg.seed + r;
    const agents::StepSchedule schedule{p.alpha0, p.decay};
    agents::EvalResult result = agents::td0_decor_evaluate(report.mdp, agent, p.steps, schedule, p.checkpoint_every,
                                                           TransformMatrix::identity(report.mdp.n_features()));
    ChainRun& run = report.runs[r];
    run.curve = std::move(result.curve);
    run.minimizer_loss = minimizer_loss;
    run.final_loss = run.curve.back().loss;
    const double initial_off = run.curve.front().off_diagonal, final_off = run.curve.back().off_diagonal;
    if (initial_off > 0.0) {
      run.off_diagonal_ratio = final_off / initial_off;
    } else {
      run.off_diagonal_ratio = final_off > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    run.loss_gap = std::abs(run.final_loss - minimizer_loss) / std::max(std::abs(minimizer_loss), 1e-300);
  });

  for (std::size_t r = 0; r < cfg.runs; ++r) {
    const std::string id = std::to_string(r);
    for (const agents::EvalCheckpoint& c : report.runs[r].curve) {
      const double x = static_cast<double>(c.step);
      report.rows.push_back({id, x, "loss_reg", c.loss});
      report.rows.push_back({id, x, "off_diagonal", c.off_diagonal});
      report.rows.push_back({id, x, "orthogonality_defect", c.orthogonality});
    }
    report.rows.push_back({id, 0.0, "minimizer_loss", report.runs[r].minimizer_loss});
    report.rows.push_back({id, 0.0, "final_loss_gap", report.runs[r].loss_gap});
    report.rows.push_back({id, 0.0, "off_diagonal_ratio", report.runs[r].off_diagonal_ratio});
  }
  return report;
}

namespace {

Matrix encode_row(const envs::GridWorld& world, std::size_t cell) {
  const Vector e = world.encode(cell);
  return Matrix::row_vector(e);
}

/// Discounted return of the greedy policy from the start cell.
double greedy_return(const nn::MlpParams& params, const envs::GridWorld& world, double gamma,
                     std::size_t max_steps) {
  std::size_t cell = world.start();
  double ret = 0.0, discount = 1.0;
  for (std::size_t t = 0; t < max_steps; ++t) {
    const Matrix q = nn::forward(params, encode_row(world, cell)).q;
    const envs::GridStep st = world.step(cell, agents::greedy(q.row(0)));
    ret += discount * st.reward;
    discount *= gamma;
    if (st.done) break;
    cell = st.cell;
  }
  return ret;
}

DqnCheckpoint checkpoint(const nn::MlpParams& params, const envs::GridWorld& world, const Matrix& held_out,
                         double gamma, std::size_t max_steps, std::size_t step, double gradient_max_abs) {
  DqnCheckpoint c;
  c.step = step;
  c.greedy_return = greedy_return(params, world, gamma, max_steps);
  const Matrix phi = nn::forward(params, held_out).features;
  c.gram = gram_penalty(phi);
  c.mean_abs_off_gram = mean_abs_off_diagonal_gram(phi);
  double norm = 0.0;
  for (std::size_t n = 0; n < phi.rows(); ++n) {
    const auto row = phi.row(n);
    norm += std::sqrt(dot(row, row));
  }
  c.feature_norm = norm / static_cast<double>(phi.rows());
  c.gradient_max_abs = gradient_max_abs;
  const double eps[] = {0.01, 0.1, 1.0};
  for (int k = 0; k < 3; ++k) c.sparsity[k] = sparsity(phi, eps[k]);
  return c;
}

}  // namespace

DqnRun dqn_gram_run(const ExperimentConfig& cfg, double lambda, std::uint64_t seed) {
  const auto& p = cfg.dqn;
  const envs::GridWorld world(p.rows, p.cols);
  const Matrix held_out = world.evaluation_states();

  Rng init_rng(derive_seed(seed, 0));
  Rng explore_rng(derive_seed(seed, 1));
  Rng replay_rng(derive_seed(seed, 2));
  const std::size_t widths[] = {world.input_dim(), p.hidden, p.feature_width};
  agents::DqnGramAgent agent(nn::MlpParams::init(widths, envs::GridWorld::kActions, init_rng));
  agents::ReplayBuffer buffer(p.buffer);

  agents::AgentConfig acfg;
  acfg.alpha = p.learning_rate;
  acfg.lambda = lambda;
  acfg.gamma = p.gamma;
  acfg.batch_size = p.batch;
  acfg.target_sync_period = p.sync_period;
  acfg.validate();

  DqnRun run;
  run.lambda = lambda;
  run.seed = seed;
  run.optimal_return = oracle::optimal_values(world.control_problem(), p.gamma)[world.start()];
  run.checkpoints.push_back(checkpoint(agent.online, world, held_out, p.gamma, p.max_episode_steps, 0, 0.0));

  const double anneal_steps = std::max(1.0, p.anneal_fraction * static_cast<double>(p.steps));
  const std::size_t start_training = std::max(p.warmup, p.batch);
  std::size_t cell = world.start(), episode_steps = 0;
  double episode_return = 0.0, discount = 1.0, last_gradient = 0.0;

  for (std::size_t t = 1; t <= p.steps; ++t) {
    const double frac = std::min(1.0, static_cast<double>(t - 1) / anneal_steps);
    const double epsilon = 1.0 - (1.0 - p.epsilon_final) * frac;
    const Matrix state = encode_row(world, cell);
    const Matrix q = nn::forward(agent.online, state).q;
    const std::size_t action = agents::epsilon_greedy(q.row(0), epsilon, explore_rng);
    if (t <= start_training) run.behaviour_actions.push_back(action);

    const envs::GridStep st = world.step(cell, action);
    buffer.push({world.encode(cell), action, st.reward, world.encode(st.cell), st.done});
    episode_return += discount * st.reward;
    discount *= p.gamma;
    ++episode_steps;
    if (st.done || episode_steps >= p.max_episode_steps) {
      run.episode_returns.push_back(episode_return);
      cell = world.start();
      episode_steps = 0;
      episode_return = 0.0;
      discount = 1.0;
    } else {
      cell = st.cell;
    }

    if (buffer.size() >= start_training) last_gradient = agents::dqn_gram_step(agent, buffer, acfg, replay_rng).gradient_max_abs;

    if (t % p.checkpoint_every == 0 || t == p.steps)
      run.checkpoints.push_back(checkpoint(agent.online, world, held_out, p.gamma, p.max_episode_steps, t, last_gradient));
  }
  return run;
}

DqnReport run_dqn_gram(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& p = cfg.dqn;
  DqnReport report;
  report.runs.resize(p.lambda_grid.size() * cfg.runs);
  parallel_for(report.runs.size(), cfg.jobs, [&](std::size_t k) {
    report.runs[k] = dqn_gram_run(cfg, p.lambda_grid[k / cfg.runs], cfg.seed + k % cfg.runs);
  });
  for (std::size_t k = 0; k < report.runs.size(); ++k) {
    const DqnRun& run = report.runs[k];
    const std::string id = label("lambda=", run.lambda) + ";run=" + std::to_string(k % cfg.runs);
    for (const DqnCheckpoint& c : run.checkpoints) {
      const double x = static_cast<double>(c.step);
      report.rows.push_back({id, x, "greedy_return", c.greedy_return});
      report.rows.push_back({id, x, "mean_abs_off_gram", c.mean_abs_off_gram});
      report.rows.push_back({id, x, "gram_penalty", c.gram.penalty});
      report.rows.push_back({id, x, "feature_norm_term", c.gram.feature_norm_term});
      report.rows.push_back({id, x, "cross_sample_term", c.gram.cross_sample_term});
      report.rows.push_back({id, x, "variance_term", c.gram.variance_term});
      report.rows.push_back({id, x, "feature_norm", c.feature_norm});
      report.rows.push_back({id, x, "gradient_max_abs", c.gradient_max_abs});
      report.rows.push_back({id, x, "sparsity_0.01", c.sparsity[0]});
      report.rows.push_back({id, x, "sparsity_0.1", c.sparsity[1]});
      report.rows.push_back({id, x, "sparsity_1", c.sparsity[2]});
    }
    report.rows.push_back({id, 0.0, "optimal_return", run.optimal_return});
  }
  return report;
}

}  // namespace decorr::harness
