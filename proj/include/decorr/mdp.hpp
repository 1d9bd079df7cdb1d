#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "decorr/matrix.hpp"

namespace decorr {

/// A finite Markov chain under a fixed policy, in feature form.
///
/// A state flagged in `terminal` ends the episode once its reward R(s) is
/// collected. Its row in `transition` is the restart distribution, so P is
/// row-stochastic and `mu` is both the stationary and the episodic
/// visitation distribution. Bootstrapping from a terminal state's successor
/// is masked out everywhere.
struct MdpSpec {
  std::size_t n_states = 0;
  Matrix features;    // n_states × d
  Matrix transition;  // n_states × n_states
  Vector rewards;     // R(s)
  Vector mu;
  std::vector<bool> terminal;
  double gamma = 0.9;

  std::size_t n_features() const noexcept { return features.cols(); }

  /// Throws DomainError / DimensionError on any broken invariant: P rows
  /// must sum to 1 within 1e-12, mu must be a distribution with
  /// μᵀP = μᵀ within 1e-9, and 0 ≤ γ < 1.
  void validate() const;
};

/// Deterministic finite control problem (used for optimal-return checks).
/// Tables are indexed by s * n_actions + a.
struct ControlProblem {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<std::size_t> next;
  Vector reward;
  std::vector<bool> done;

  std::size_t index(std::size_t s, std::size_t a) const { return s * n_actions + a; }
};

/// Stationary distribution of a row-stochastic matrix (solves μᵀP = μᵀ,
/// Σμ = 1 directly).
Vector stationary_distribution(const Matrix& transition);

/// Text layout:
///
///   # comment
///   [mdp]
///   n_states = 3
///   n_features = 2
///   gamma = 0.9
///   [features]        one row per state, whitespace separated
///   [transition]      one row per state
///   [rewards]         one line
///   [mu]              one line
///   [terminal]        one line of 0/1 flags
///
/// Reals are written with 17 significant digits so a round trip is exact.
void write_mdp(std::ostream& out, const MdpSpec& mdp);
MdpSpec read_mdp(std::istream& in);

void save_mdp(const std::filesystem::path& path, const MdpSpec& mdp);
MdpSpec load_mdp(const std::filesystem::path& path);

}  // namespace decorr
