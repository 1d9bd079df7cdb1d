#pragma once

// Decorrelation penalty evaluated through the n×n minibatch Gram matrix
// G = ΦΦᵀ instead of the d×d feature covariance ΦᵀΦ:
//
//   Σ_{i≠j} (ΦᵀΦ)_ij² = Σ_{n,m} G_nm² − Σ_d Var_d²,   Var_d = Σ_n φ_nd²
//
// Cost is O(n²d): linear in the feature count for a fixed batch size.

#include <cstddef>

#include "decorr/matrix.hpp"

namespace decorr {

struct GramPenaltyReport {
  double penalty = 0.0;
  double feature_norm_term = 0.0;  // Σ_n ‖φ_n‖⁴
  double cross_sample_term = 0.0;  // Σ_{n≠m} (φ_nᵀφ_m)²
  double variance_term = 0.0;      // Σ_d Var_d², uncentered
};

/// Work counters filled by gram_penalty when requested.
struct GramCost {
  std::size_t multiply_adds = 0;
  std::size_t scratch_elements = 0;  // largest intermediate buffer
};

GramPenaltyReport gram_penalty(const Matrix& phi, GramCost* cost = nullptr);

/// ∂/∂Φ [Σ G² − Σ Var²] = 4(GΦ − Φ·diag(Var)), shape n×d.
Matrix gram_penalty_gradient(const Matrix& phi);

/// 1 − #{|φ| > ε} / N over every entry of the batch.
double sparsity(const Matrix& phi, double epsilon);

/// Mean |G_nm| over n ≠ m.
double mean_abs_off_diagonal_gram(const Matrix& phi);

}  // namespace decorr
