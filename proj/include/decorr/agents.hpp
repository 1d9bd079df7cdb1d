#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "decorr/decorrelation.hpp"
#include "decorr/matrix.hpp"
#include "decorr/mdp.hpp"
#include "decorr/mlp.hpp"
#include "decorr/random.hpp"

namespace decorr::agents {

struct AgentConfig {
  double alpha = 0.01;
  double lambda = 0.0;
  double gamma = 0.99;
  double epsilon = 0.1;
  std::size_t project_every = 0;  // 0 = never
  std::size_t batch_size = 32;
  std::size_t target_sync_period = 200;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first field out of range.
  void validate() const;
};

/// Draws one uniform number and one uniform action on every call so the
/// random stream advances identically whatever the outcome. With
/// probability ε the uniform action is returned, otherwise the argmax with
/// ties going to the lowest index.
std::size_t epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng);

/// Lowest-index argmax.
std::size_t greedy(std::span<const double> q);

// ---------------------------------------------------------------------------
// Algorithm 1: linear Q-learning through the decorrelating transform.

/// φ(s,a): φ(s) copied into block a of an n_actions·d vector.
Vector stack_action_features(std::span<const double> phi, std::size_t action, std::size_t n_actions);

struct ActionTransition {
  Vector phi_sa;                       // φ(s, a)
  double reward = 0.0;
  std::vector<Vector> phi_next_actions;  // φ(s′, a′) for every a′
  bool terminal = false;
};

/// A ← A − α·stochastic_gradient with the bootstrap max_a′ φ(s′,a′)ᵀA𝟙.
/// `update_index` is the 1-based count of this update; when project_every
/// is k > 0 the result is projected onto the orthogonal matrices on every
/// k-th update.
TransformMatrix linear_q_decor_step(const TransformMatrix& a, const ActionTransition& t,
                                    const AgentConfig& cfg, std::size_t update_index = 1);

/// In-place form of linear_q_decor_step for binary state-action features
/// given by their active indices. Keeps A𝟙 cached so action values cost
/// O(active) and an update O(active·d).
class SparseDecorLearner {
 public:
  SparseDecorLearner(std::size_t dim, double step_size, double lambda);

  std::size_t dim() const noexcept { return a_.rows(); }
  const Matrix& matrix() const noexcept { return a_; }
  const Vector& weights() const noexcept { return w_; }

  double value(std::span<const std::size_t> active) const;
  /// Applies A ← A − step·φvᵀ with v = −δ𝟙 + λ(‖u‖²u − u∘u∘u), u = Aᵀφ.
  void update(std::span<const std::size_t> active, double td_error);
  void project();

 private:
  Matrix a_;
  Vector w_;
  Vector u_;
  double step_;
  double lambda_;
};

// ---------------------------------------------------------------------------
// TD(0) evaluation with the decorrelating update.

struct StepSchedule {
  double alpha0 = 0.05;
  double decay = 0.0;  // α_t = α0 / (1 + t·decay)

  double at(std::size_t t) const { return alpha0 / (1.0 + static_cast<double>(t) * decay); }
};

struct EvalCheckpoint {
  std::size_t step = 0;
  double loss = 0.0;              // loss_reg total at the configured λ
  double off_diagonal = 0.0;      // Σ_{i<j}(AᵀΦᵀDΦA)_ij²
  double orthogonality = 0.0;     // ‖AᵀA − I‖_F
};

struct EvalResult {
  TransformMatrix final_a;
  std::vector<TransformMatrix> trajectory;  // A at every checkpoint
  std::vector<EvalCheckpoint> curve;
};

/// Runs `steps` stochastic updates on transitions drawn i.i.d.: s ~ μ then
/// s′ ~ P(s, ·). Uses cfg.lambda, cfg.project_every and cfg.seed; the step
/// size follows `schedule`. Checkpoints are taken at step 0, every
/// `checkpoint_every` steps, and at the end.
EvalResult td0_decor_evaluate(const MdpSpec& mdp, const AgentConfig& cfg, std::size_t steps,
                              const StepSchedule& schedule, std::size_t checkpoint_every,
                              const TransformMatrix& initial);

// ---------------------------------------------------------------------------
// Algorithm 2: DQN with the Gram regularizer.

struct DqnTransition {
  Vector state;
  std::size_t action = 0;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  /// i-th oldest stored transition.
  const DqnTransition& at(std::size_t i) const;

  void push(DqnTransition t);
  /// batch_size distinct indices in at() order, drawn by a partial
  /// Fisher-Yates shuffle. Throws DomainError when size() < batch_size.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;
  std::vector<DqnTransition> sample(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest item once full
  std::vector<DqnTransition> items_;
};

/// Targets r + γ·1{not terminal}·max_a Q_target(s′, a).
nn::Minibatch make_td_batch(const nn::MlpParams& target, std::span<const DqnTransition> batch,
                            double gamma);

struct DqnGramAgent {
  nn::MlpParams online;
  nn::MlpParams target;
  nn::AdamState adam;
  std::size_t updates = 0;

  explicit DqnGramAgent(nn::MlpParams init);
};

struct DqnUpdate {
  double td_loss = 0.0;
  double penalty = 0.0;
  double gradient_max_abs = 0.0;
  bool target_synced = false;
};

/// One minibatch update: sample, backward on mean δ² + λ·Gram penalty, Adam
/// step of size cfg.alpha, then copy online into target every
/// cfg.target_sync_period updates.
DqnUpdate dqn_gram_step(DqnGramAgent& agent, const ReplayBuffer& buffer, const AgentConfig& cfg,
                        Rng& rng);

}  // namespace decorr::agents
