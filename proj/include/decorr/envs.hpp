#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "decorr/matrix.hpp"
#include "decorr/mdp.hpp"
#include "decorr/random.hpp"

namespace decorr::envs {

// ---------------------------------------------------------------------------
// Stochastic linear regression: x ~ N(0, Σ), y = x₁ + 2x₂ (noiseless).

struct SlrSample {
  std::array<double, 2> x{};
  double y = 0.0;
};

inline constexpr std::array<double, 2> kSlrWeights{1.0, 2.0};

double slr_label(std::span<const double, 2> x);

/// Lower Cholesky factor of a symmetric PSD matrix. Throws DomainError for
/// asymmetric or indefinite input (pivot below −1e-12).
Matrix cholesky(const Matrix& sigma);

/// Σ = [[1, rho], [rho, 1]].
Matrix slr_covariance(double rho);

SlrSample slr_sample(Rng& rng, const Matrix& sigma);

// ---------------------------------------------------------------------------
// Mountain Car, classic formulation.

struct MountainCarState {
  double position = -0.5;
  double velocity = 0.0;
};

struct MountainCarStep {
  MountainCarState state;
  double reward = -1.0;
  bool done = false;
};

inline constexpr double kMinPosition = -1.2;
inline constexpr double kMaxPosition = 0.6;
inline constexpr double kMaxSpeed = 0.07;
inline constexpr double kGoalPosition = 0.5;
inline constexpr std::size_t kMountainCarActions = 3;

/// action ∈ {0: reverse, 1: coast, 2: forward}.
MountainCarStep mountain_car_step(MountainCarState state, int action);

/// Position uniform in [−0.6, −0.4), velocity 0.
MountainCarState mountain_car_reset(Rng& rng);

// ---------------------------------------------------------------------------
// Tile coding.

/// Tiling k is shifted by k/tilings of a tile width along every dimension,
/// so each tiling carries (tiles_per_dim + 1)^dims cells. Duplicated
/// features are appended after the base features in the listed order.
struct TileCoderSpec {
  std::size_t tilings = 2;
  std::size_t tiles_per_dim = 8;
  std::vector<double> lows;
  std::vector<double> highs;
  std::vector<std::size_t> duplication_indices;

  std::size_t dims() const { return lows.size(); }
  std::size_t cells_per_tiling() const;
  std::size_t base_dim() const { return tilings * cells_per_tiling(); }
  std::size_t dim() const { return base_dim() + duplication_indices.size(); }
  void validate() const;

  static TileCoderSpec mountain_car(std::size_t tilings, std::size_t tiles_per_dim,
                                    std::vector<std::size_t> duplication_indices = {});
};

/// Indices of the active (value 1) entries of tile_features, ascending
/// within the base block followed by duplicate positions.
std::vector<std::size_t> active_features(const TileCoderSpec& spec, std::span<const double> state);

Vector tile_features(const TileCoderSpec& spec, std::span<const double> state);

/// k indices spread evenly over the base features: ⌊(i + ½)·base_dim / k⌋.
std::vector<std::size_t> spread_duplication_indices(const TileCoderSpec& spec, std::size_t k);

// ---------------------------------------------------------------------------
// Chain MDP fixtures.

enum class FeatureMode { tabular, random_full_rank, correlated };

inline constexpr double kChainForwardProbability = 0.75;
inline constexpr double kChainStepReward = -0.1;
inline constexpr double kChainGoalReward = 1.0;

/// States 0..n−1; from s < n−1 move right with probability 0.75, otherwise
/// left (staying put at 0). The last state is terminal and restarts at 0.
/// R(s) = −0.1 except R(n−1) = 1. μ is the stationary distribution of the
/// restart chain. n_features = 0 means n_states; tabular mode ignores it.
/// Random feature modes are certified full column rank (smallest singular
/// value > 1e-6), regenerating with derived seeds up to 10 times.
MdpSpec chain_mdp(std::size_t n_states, double gamma, FeatureMode mode, std::uint64_t seed = 0,
                  std::size_t n_features = 0);

// ---------------------------------------------------------------------------
// Deterministic gridworld for the deep agent.

struct GridStep {
  std::size_t cell = 0;
  double reward = 0.0;
  bool done = false;
};

/// rows × cols grid, start at (0,0), goal at the opposite corner. Actions
/// 0..3 = up, right, down, left; bumping a wall leaves the agent in place.
/// Reaching the goal pays 1 and ends the episode; every other step pays 0.
/// State input handed to a network.
enum class GridEncoding {
  coordinates,  // normalised (row, col) in [0, 1]
  one_hot,      // indicator of the cell
};

class GridWorld {
 public:
  static constexpr std::size_t kActions = 4;

  GridWorld(std::size_t rows, std::size_t cols, GridEncoding encoding = GridEncoding::one_hot);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t n_cells() const noexcept { return rows_ * cols_; }
  std::size_t start() const noexcept { return 0; }
  std::size_t goal() const noexcept { return n_cells() - 1; }
  GridEncoding encoding() const noexcept { return encoding_; }
  std::size_t input_dim() const noexcept { return encoding_ == GridEncoding::one_hot ? n_cells() : 2; }

  GridStep step(std::size_t cell, std::size_t action) const;
  Vector encode(std::size_t cell) const;
  /// Encodings of every non-goal cell, one per row.
  Matrix evaluation_states() const;
  ControlProblem control_problem() const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  GridEncoding encoding_;
};

}  // namespace decorr::envs
