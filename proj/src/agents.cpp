#include "decorr/agents.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "decorr/errors.hpp"

namespace decorr::agents {

void AgentConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be non-negative");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (target_sync_period == 0) throw ConfigError("target_sync_period must be at least 1");
}

std::size_t greedy(std::span<const double> q) {
  if (q.empty()) throw DimensionError("greedy: no actions");
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a)
    if (q[a] > q[best]) best = a;
  return best;
}

std::size_t epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng) {
  if (q.empty()) throw DimensionError("epsilon_greedy: no actions");
  const double u = uniform01(rng);
  const auto random_action = static_cast<std::size_t>(uniform_index(rng, q.size()));
  return u < epsilon ? random_action : greedy(q);
}

Vector stack_action_features(std::span<const double> phi, std::size_t action, std::size_t n_actions) {
  if (action >= n_actions) throw DimensionError("stack_action_features: action out of range");
  Vector out(phi.size() * n_actions, 0.0);
  std::copy(phi.begin(), phi.end(), out.begin() + static_cast<long>(action * phi.size()));
  return out;
}

TransformMatrix linear_q_decor_step(const TransformMatrix& a, const ActionTransition& t,
                                    const AgentConfig& cfg, std::size_t update_index) {
  Transition tr;
  tr.phi = t.phi_sa;
  tr.reward = t.reward;
  tr.terminal = t.terminal;
  if (t.phi_next_actions.empty()) {
    tr.phi_next.assign(t.phi_sa.size(), 0.0);
  } else {
    Vector q;
    for (const Vector& phi : t.phi_next_actions) q.push_back(a.value(phi));
    tr.phi_next = t.phi_next_actions[greedy(q)];
  }
  Matrix next = a.matrix();
  Matrix g = stochastic_gradient(a, tr, cfg.lambda, cfg.gamma);
  g *= cfg.alpha;
  next -= g;
  TransformMatrix out(std::move(next));
  if (cfg.project_every > 0 && update_index % cfg.project_every == 0) out = project_orthogonal(out);
  return out;
}

SparseDecorLearner::SparseDecorLearner(std::size_t dim, double step_size, double lambda)
    : a_(Matrix::identity(dim)), w_(dim, 1.0), u_(dim, 0.0), step_(step_size), lambda_(lambda) {}

double SparseDecorLearner::value(std::span<const std::size_t> active) const {
  double v = 0.0;
  for (std::size_t i : active) v += w_[i];
  return v;
}

void SparseDecorLearner::update(std::span<const std::size_t> active, double td_error) {
  const std::size_t d = dim();
  double v_sum = 0.0;
  if (lambda_ == 0.0) {
    v_sum = -td_error * static_cast<double>(d);
    for (std::size_t i : active) {
      auto row = a_.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] += step_ * td_error;
      w_[i] -= step_ * v_sum;
    }
    return;
  }
  std::fill(u_.begin(), u_.end(), 0.0);
  for (std::size_t i : active) {
    const auto row = a_.row(i);
    for (std::size_t j = 0; j < d; ++j) u_[j] += row[j];
  }
  double norm_sq = 0.0;
  for (double x : u_) norm_sq += x * x;
  // Reuse u_ to hold v.
  for (std::size_t j = 0; j < d; ++j) {
    const double x = u_[j];
    u_[j] = -td_error + lambda_ * (norm_sq * x - x * x * x);
    v_sum += u_[j];
  }
  for (std::size_t i : active) {
    auto row = a_.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] -= step_ * u_[j];
    w_[i] -= step_ * v_sum;
  }
}

void SparseDecorLearner::project() {
  a_ = project_orthogonal(TransformMatrix(a_)).matrix();
  w_ = a_.row_sums();
}

namespace {

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  // Rounding left u above the total; take the last state with mass.
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0) return k;
  return 0;
}

EvalCheckpoint measure(const TransformMatrix& a, const WeightedTransitionSet& data, double lambda,
                       std::size_t step) {
  const RegularizedLoss loss = loss_reg(a, data, lambda);
  return {step, loss.total(), loss.off_diagonal, a.orthogonality_defect()};
}

}  // namespace

EvalResult td0_decor_evaluate(const MdpSpec& mdp, const AgentConfig& cfg, std::size_t steps,
                              const StepSchedule& schedule, std::size_t checkpoint_every,
                              const TransformMatrix& initial) {
  mdp.validate();
  if (initial.dim() != mdp.n_features()) throw DimensionError("td0_decor_evaluate: A does not match features");
  if (!(schedule.alpha0 >= 0.0) || !(schedule.decay >= 0.0)) throw ConfigError("td0_decor_evaluate: bad schedule");
  const WeightedTransitionSet data = WeightedTransitionSet::from_mdp(mdp);
  const std::size_t d = mdp.n_features();

  Rng rng(cfg.seed);
  EvalResult out;
  TransformMatrix a = initial;
  out.trajectory.push_back(a);
  out.curve.push_back(measure(a, data, cfg.lambda, 0));

  Transition t;
  t.phi.resize(d);
  t.phi_next.resize(d);
  for (std::size_t step = 1; step <= steps; ++step) {
    const std::size_t s = sample_categorical(mdp.mu, rng);
    const auto row = mdp.transition.row(s);
    const std::size_t s_next = sample_categorical(std::span<const double>(row.data(), row.size()), rng);
    const auto fs = mdp.features.row(s);
    const auto fn = mdp.features.row(s_next);
    std::copy(fs.begin(), fs.end(), t.phi.begin());
    std::copy(fn.begin(), fn.end(), t.phi_next.begin());
    t.reward = mdp.rewards[s];
    t.terminal = mdp.terminal[s];

    const RankOneGradient g = stochastic_gradient_factors(a, t, cfg.lambda, mdp.gamma);
    const double alpha = schedule.at(step - 1);
    Matrix next = a.matrix();
    for (std::size_t i = 0; i < d; ++i) {
      if (g.left[i] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) next(i, j) -= alpha * g.left[i] * g.right[j];
    }
    a = TransformMatrix(std::move(next));
    if (cfg.project_every > 0 && step % cfg.project_every == 0) a = project_orthogonal(a);

    if ((checkpoint_every > 0 && step % checkpoint_every == 0) || step == steps) {
      out.trajectory.push_back(a);
      out.curve.push_back(measure(a, data, cfg.lambda, step));
    }
  }
  out.final_a = a;
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be at least 1");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

const DqnTransition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw DimensionError("ReplayBuffer::at: index out of range");
  return items_[(head_ + i) % items_.size()];
}

void ReplayBuffer::push(DqnTransition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
  if (items_.size() < batch_size) {
    throw DomainError("ReplayBuffer: cannot sample " + std::to_string(batch_size) + " from " +
                      std::to_string(items_.size()) + " stored transitions");
  }
  std::vector<std::size_t> idx(items_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t k = 0; k < batch_size; ++k) {
    const auto j = k + static_cast<std::size_t>(uniform_index(rng, idx.size() - k));
    std::swap(idx[k], idx[j]);
  }
  idx.resize(batch_size);
  return idx;
}

std::vector<DqnTransition> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  std::vector<DqnTransition> out;
  out.reserve(batch_size);
  for (std::size_t i : sample_indices(batch_size, rng)) out.push_back(at(i));
  return out;
}

nn::Minibatch make_td_batch(const nn::MlpParams& target, std::span<const DqnTransition> batch,
                            double gamma) {
  const std::size_t n = batch.size();
  const std::size_t in = target.input_dim();
  nn::Minibatch mb;
  mb.states = Matrix(n, in);
  Matrix next_states(n, in);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch[i].state.size() != in || batch[i].next_state.size() != in) {
      throw DimensionError("make_td_batch: state width does not match the network");
    }
    std::copy(batch[i].state.begin(), batch[i].state.end(), mb.states.row(i).begin());
    std::copy(batch[i].next_state.begin(), batch[i].next_state.end(), next_states.row(i).begin());
    mb.actions.push_back(batch[i].action);
  }
  const Matrix q_next = nn::forward(target, next_states).q;
  mb.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double bootstrap = 0.0;
    if (!batch[i].terminal) {
      const auto row = q_next.row(i);
      bootstrap = *std::max_element(row.begin(), row.end());
    }
    mb.targets[i] = batch[i].reward + gamma * bootstrap;
  }
  return mb;
}

DqnGramAgent::DqnGramAgent(nn::MlpParams init)
    : online(init), target(init), adam(nn::AdamState::for_params(init)) {}

DqnUpdate dqn_gram_step(DqnGramAgent& agent, const ReplayBuffer& buffer, const AgentConfig& cfg,
                        Rng& rng) {
  const std::vector<DqnTransition> batch = buffer.sample(cfg.batch_size, rng);
  const nn::Minibatch mb = make_td_batch(agent.target, batch, cfg.gamma);
  const nn::BackwardResult grad = nn::backward(agent.online, mb, cfg.lambda);
  agent.online = nn::adam_step(agent.online, grad.tape, agent.adam, cfg.alpha);
  ++agent.updates;
  DqnUpdate out{grad.td_loss, grad.penalty, nn::tape_max_abs(grad.tape), false};
  if (agent.updates % cfg.target_sync_period == 0) {
    agent.target = agent.online;
    out.target_synced = true;
  }
  return out;
}

}  // namespace decorr::agents
