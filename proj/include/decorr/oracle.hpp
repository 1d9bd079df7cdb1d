#pragma once

// Brute-force reference computations used to check the analytic code paths.
//
// Everything here is written as plain loops over the definitions and shares
// no code with the modules it verifies: it depends only on the Matrix and
// MdpSpec containers, never on matrix algorithms, decorrelation, gramreg or
// nn routines.

#include <functional>

#include "decorr/matrix.hpp"
#include "decorr/mdp.hpp"

namespace decorr::oracle {

/// Central differences (f(A+hE_ij) − f(A−hE_ij)) / 2h, entrywise.
Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& at,
                   double h = 1e-6);

/// max|analytic − numeric| / max(1, max|analytic|).
double relative_error(const Matrix& analytic, const Matrix& numeric);

/// θ* = [ΦᵀD(Φ − γPΦ)]⁻¹ΦᵀDR with rows of PΦ zeroed for terminal states.
/// Throws DomainError (with a pivot-ratio condition estimate) when the
/// system is singular.
Vector td_fixed_point(const MdpSpec& mdp);

/// L_TD(θ) = 0.5 Σ_s μ(s) Σ_s′ P(s,s′)[R(s) + γ·1{s∉𝒯}·φ(s′)ᵀθ − φ(s)ᵀθ]².
double msve(const MdpSpec& mdp, const Vector& theta);

/// One weighted transition, kept independent of the decorrelation types.
struct Sample {
  Vector phi;
  double reward = 0.0;
  Vector phi_next;
  bool terminal = false;
  double weight = 1.0;
};

/// 0.5 Σ w·[r + γ·1{not terminal}·φ′ᵀt − φᵀAθ]² + 0.5λ Σ_{i<j} (AᵀCA)_ij²,
/// C = Σ w φφᵀ, with the bootstrap weights t held fixed. Its gradient in A
/// at θ = 𝟙, t = A𝟙 is the semi-gradient.
double frozen_target_loss(const Matrix& a, const Vector& theta, const std::vector<Sample>& samples,
                          double gamma, const Vector& target_weights, double lambda);

/// λ Σ_{i<j} (AᵀCA)_ij · C·A·(e_j e_iᵀ + e_i e_jᵀ), accumulated pair by pair.
Matrix brute_reg_gradient(const Matrix& a, const Matrix& cov, double lambda);

/// Iterates V ← R + γ·1{s∉𝒯}·P·V until successive iterates differ by less
/// than tol in sup norm.
Vector value_iteration(const MdpSpec& mdp, double tol = 1e-12);

/// Optimal state values of a deterministic control problem.
Vector optimal_values(const ControlProblem& problem, double gamma, double tol = 1e-12);

}  // namespace decorr::oracle
