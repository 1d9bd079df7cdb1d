#pragma once

// Decorrelating TD(0): the reduced loss over a single transform A (values
// are φᵀA𝟙), its semi-gradient, the per-sample stochastic gradient, the
// two-parameter (θ, A) gradients and the projection onto orthogonal
// matrices.
//
// Sign convention: every gradient returned here is ∂L/∂A, a descent
// direction. Learners apply A ← A − α·gradient.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "decorr/matrix.hpp"
#include "decorr/mdp.hpp"

namespace decorr {

/// The square decorrelating transform A.
class TransformMatrix {
 public:
  TransformMatrix() = default;
  explicit TransformMatrix(Matrix a);

  static TransformMatrix identity(std::size_t d) { return TransformMatrix(Matrix::identity(d)); }

  const Matrix& matrix() const noexcept { return a_; }
  std::size_t dim() const noexcept { return a_.rows(); }

  /// A𝟙, the effective linear weights.
  Vector weights() const { return a_.row_sums(); }
  /// φᵀA𝟙.
  double value(std::span<const double> phi) const;
  /// ‖AᵀA − I‖_F.
  double orthogonality_defect() const;

 private:
  Matrix a_;
};

struct Transition {
  Vector phi;
  double reward = 0.0;
  Vector phi_next;
  bool terminal = false;
};

/// Transitions with their sampling weights μ. Weight k multiplies every
/// term contributed by transitions[k].
struct WeightedTransitionSet {
  std::vector<Transition> transitions;
  Vector weights;
  double gamma = 0.9;

  std::size_t dim() const;
  /// ΦᵀDΦ over the source features.
  Matrix second_moment() const;
  void validate() const;

  /// One entry per (s, s′) with P(s,s′) > 0, weighted μ(s)P(s,s′); s′
  /// features are kept for terminal states but masked by the terminal flag.
  static WeightedTransitionSet from_mdp(const MdpSpec& mdp);
};

/// Row k of e1 is e_i and row k of e2 is e_j for the k-th pair (i, j),
/// i < j, in lexicographic order.
struct SelectorPair {
  Matrix e1;
  Matrix e2;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

SelectorPair selector_matrices(std::size_t d);

/// diag{σ̃_ij}_{i<j} with σ̃ = AᵀCA, ordered as selector_matrices(d).
Matrix tilde_d(const TransformMatrix& a, const Matrix& cov);

struct RegularizedLoss {
  double td = 0.0;           // 0.5 Σ μ δ²
  double regularizer = 0.0;  // 0.5 λ Σ_{i<j} σ̃_ij²
  double off_diagonal = 0.0; // Σ_{i<j} σ̃_ij², unscaled

  double total() const noexcept { return td + regularizer; }
};

/// r + γ·1{not terminal}·φ′ᵀA𝟙 − φᵀA𝟙.
double td_error(const TransformMatrix& a, const Transition& t, double gamma);

RegularizedLoss loss_reg(const TransformMatrix& a, const WeightedTransitionSet& data,
                         double lambda);

/// λ·C·A·[E₁ᵀD̃E₂ + E₂ᵀD̃E₁], the gradient of 0.5λΣ_{i<j}(AᵀCA)_ij².
Matrix regularizer_gradient(const TransformMatrix& a, const Matrix& cov, double lambda);

/// −Σμ φ𝟙ᵀδ + λ·ΦᵀDΦ·A·[E₁ᵀD̃E₂ + E₂ᵀD̃E₁], bootstrap target held fixed.
Matrix semi_gradient(const TransformMatrix& a, const WeightedTransitionSet& data, double lambda);

/// A per-sample gradient always factors as φ·vᵀ. `right` is
/// v = −δ𝟙 + λ(‖u‖²u − u∘u∘u) with u = Aᵀφ.
struct RankOneGradient {
  Vector left;
  Vector right;

  Matrix dense() const { return outer(left, right); }
};

/// Single-transition gradient with φφᵀ in place of ΦᵀDΦ.
Matrix stochastic_gradient(const TransformMatrix& a, const Transition& t, double lambda,
                           double gamma);
RankOneGradient stochastic_gradient_factors(const TransformMatrix& a, const Transition& t,
                                            double lambda, double gamma);

struct FullGradients {
  Vector theta;
  Matrix a;
};

/// Gradients of the two-parameter loss with values φᵀAθ.
FullGradients full_gradients(const Vector& theta, const TransformMatrix& a,
                             const WeightedTransitionSet& data, double lambda);

/// Nearest orthogonal matrix in Frobenius norm, UVᵀ from A = UΣVᵀ.
TransformMatrix project_orthogonal(const TransformMatrix& a);

/// A* = V·diag(Vᵀθ*) with V the eigenvectors of ΦᵀDΦ and θ* the TD fixed
/// point, so A*𝟙 = θ* and A*ᵀΦᵀDΦA* is diagonal. Throws DomainError for a
/// rank-deficient Φ.
TransformMatrix construct_minimizer(const MdpSpec& mdp);

/// Mutation hooks for the verification suite. A FaultScope installs a
/// deliberate defect on the current thread for its lifetime.
enum class Fault {
  none,
  regularizer_sign_flip,   // semi_gradient regularizer term negated
  dropped_terminal_mask,   // bootstrap kept on terminal transitions
  pair_offset,             // selector_matrices starts j at i instead of i+1
};

Fault active_fault() noexcept;

class FaultScope {
 public:
  explicit FaultScope(Fault fault) noexcept;
  ~FaultScope();
  FaultScope(const FaultScope&) = delete;
  FaultScope& operator=(const FaultScope&) = delete;

 private:
  Fault previous_;
};

}  // namespace decorr
