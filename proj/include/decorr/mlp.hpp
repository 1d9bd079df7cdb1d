#pragma once

// Fixed-architecture fully connected Q-network: rectified dense layers, the
// last of which is the feature layer φ(s|w), followed by linear per-action
// heads θ_a without bias. Gradients are hand-derived reverse mode.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "decorr/matrix.hpp"
#include "decorr/random.hpp"

namespace decorr::nn {

struct DenseLayer {
  Matrix weights;  // out × in
  Vector biases;   // out

  bool operator==(const DenseLayer&) const = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  Matrix heads;  // n_actions × feature_dim, row a is θ_a

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t n_actions() const { return heads.rows(); }
  std::size_t parameter_count() const;

  /// Throws DimensionError if layer shapes do not chain.
  void validate() const;

  /// widths = {input, hidden..., feature}. Weights and biases are drawn
  /// uniformly from ±1/√fan_in; heads likewise with fan_in = feature width.
  static MlpParams init(std::span<const std::size_t> widths, std::size_t n_actions, Rng& rng);
  /// Same shapes, all parameters zero.
  static MlpParams zeros_like(const MlpParams& shape);

  bool operator==(const MlpParams&) const = default;
};

/// Per-parameter gradient buffers; same layout as MlpParams.
using GradientTape = MlpParams;

/// Flat view used by optimisers and finite-difference checks.
std::vector<double*> parameter_pointers(MlpParams& params);
double tape_max_abs(const GradientTape& tape);

struct ForwardResult {
  Matrix features;                  // n × d, last hidden activation
  Matrix q;                         // n × n_actions
  std::vector<Matrix> activations;  // input followed by every layer output
};

ForwardResult forward(const MlpParams& params, const Matrix& states);

struct Minibatch {
  Matrix states;                     // n × input
  std::vector<std::size_t> actions;  // n
  Vector targets;                    // n, computed elsewhere and held fixed
};

struct BackwardResult {
  GradientTape tape;
  double td_loss = 0.0;  // mean over the batch of (q − target)²
  double penalty = 0.0;  // Gram penalty of the features, before λ
  double objective = 0.0;
};

/// Objective (1/N)Σ(φ(s_n)ᵀθ_{a_n} − y_n)² + λ·[Σ G² − Σ Var²].
double objective(const MlpParams& params, const Minibatch& batch, double lambda);

BackwardResult backward(const MlpParams& params, const Minibatch& batch, double lambda);

MlpParams sgd_step(const MlpParams& params, const GradientTape& tape, double alpha);

struct AdamState {
  GradientTape first_moment;
  GradientTape second_moment;
  std::size_t steps = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const MlpParams& params);
};

MlpParams adam_step(const MlpParams& params, const GradientTape& tape, AdamState& state,
                    double alpha);

/// Binary checkpoint, little-endian:
///   "DGRAM1" | u32 layer count | per layer u32 out, u32 in | u32 actions,
///   u32 feature width | f64 payload: each layer's weights (row-major) then
///   biases, then heads (row-major).
void save_checkpoint(const std::filesystem::path& path, const MlpParams& params);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace decorr::nn
