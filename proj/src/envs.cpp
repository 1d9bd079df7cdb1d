#include "decorr/envs.hpp"

#include <algorithm>
#include <cmath>

#include "decorr/errors.hpp"

namespace decorr::envs {

double slr_label(std::span<const double, 2> x) { return kSlrWeights[0] * x[0] + kSlrWeights[1] * x[1]; }

Matrix cholesky(const Matrix& sigma) {
  if (!sigma.is_square()) throw DimensionError("cholesky: non-square " + sigma.shape());
  const std::size_t n = sigma.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(sigma(i, j) - sigma(j, i)) > 1e-12) throw DomainError("cholesky: asymmetric input");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = sigma(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (diag < -1e-12) throw DomainError("cholesky: matrix is not positive semidefinite");
    l(j, j) = std::sqrt(std::max(diag, 0.0));
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = sigma(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (l(j, j) > 0.0) {
        l(i, j) = s / l(j, j);
      } else if (std::abs(s) > 1e-12) {
        throw DomainError("cholesky: matrix is not positive semidefinite");
      }
    }
  }
  return l;
}

Matrix slr_covariance(double rho) { return Matrix{{1.0, rho}, {rho, 1.0}}; }

SlrSample slr_sample(Rng& rng, const Matrix& sigma) {
  if (sigma.rows() != 2 || sigma.cols() != 2) throw DimensionError("slr_sample: sigma must be 2x2");
  const Matrix l = cholesky(sigma);
  const double z0 = standard_normal(rng);
  const double z1 = standard_normal(rng);
  SlrSample out;
  out.x[0] = l(0, 0) * z0;
  out.x[1] = l(1, 0) * z0 + l(1, 1) * z1;
  out.y = slr_label(out.x);
  return out;
}

MountainCarStep mountain_car_step(MountainCarState state, int action) {
  if (action < 0 || action > 2) {
    throw DomainError("mountain_car_step: action must be 0, 1 or 2, got " + std::to_string(action));
  }
  double v = state.velocity + 0.001 * (action - 1) - 0.0025 * std::cos(3.0 * state.position);
  v = std::clamp(v, -kMaxSpeed, kMaxSpeed);
  double p = std::clamp(state.position + v, kMinPosition, kMaxPosition);
  if (p == kMinPosition && v < 0.0) v = 0.0;
  return {{p, v}, -1.0, p >= kGoalPosition};
}

MountainCarState mountain_car_reset(Rng& rng) { return {-0.6 + 0.2 * uniform01(rng), 0.0}; }

std::size_t TileCoderSpec::cells_per_tiling() const {
  std::size_t cells = 1;
  for (std::size_t j = 0; j < dims(); ++j) cells *= tiles_per_dim + 1;
  return cells;
}

void TileCoderSpec::validate() const {
  if (tilings == 0 || tiles_per_dim == 0) throw ConfigError("tile coder: tilings and tiles must be positive");
  if (lows.size() != highs.size() || lows.empty()) throw ConfigError("tile coder: bad bounds");
  for (std::size_t j = 0; j < dims(); ++j)
    if (!(highs[j] > lows[j])) throw ConfigError("tile coder: empty range in dimension " + std::to_string(j));
  for (std::size_t i : duplication_indices)
    if (i >= base_dim()) throw ConfigError("tile coder: duplication index out of range");
}

TileCoderSpec TileCoderSpec::mountain_car(std::size_t tilings, std::size_t tiles_per_dim,
                                          std::vector<std::size_t> duplication_indices) {
  TileCoderSpec spec;
  spec.tilings = tilings;
  spec.tiles_per_dim = tiles_per_dim;
  spec.lows = {kMinPosition, -kMaxSpeed};
  spec.highs = {kMaxPosition, kMaxSpeed};
  spec.duplication_indices = std::move(duplication_indices);
  spec.validate();
  return spec;
}

std::vector<std::size_t> active_features(const TileCoderSpec& spec, std::span<const double> state) {
  if (state.size() != spec.dims()) throw DimensionError("tile coder: state has wrong dimension");
  for (std::size_t j = 0; j < spec.dims(); ++j) {
    if (!(state[j] >= spec.lows[j] && state[j] <= spec.highs[j])) {
      throw DomainError("tile coder: state component " + std::to_string(j) + " = " +
                        std::to_string(state[j]) + " outside bounds");
    }
  }
  const double tiles = static_cast<double>(spec.tiles_per_dim);
  std::vector<std::size_t> active;
  active.reserve(spec.tilings + spec.duplication_indices.size());
  for (std::size_t k = 0; k < spec.tilings; ++k) {
    const double offset = static_cast<double>(k) / static_cast<double>(spec.tilings);
    std::size_t cell = 0;
    for (std::size_t j = 0; j < spec.dims(); ++j) {
      const double scaled = (state[j] - spec.lows[j]) / (spec.highs[j] - spec.lows[j]) * tiles + offset;
      const auto idx = std::min(static_cast<std::size_t>(scaled), spec.tiles_per_dim);
      cell = cell * (spec.tiles_per_dim + 1) + idx;
    }
    active.push_back(k * spec.cells_per_tiling() + cell);
  }
  const std::size_t base = spec.base_dim();
  for (std::size_t c = 0; c < spec.duplication_indices.size(); ++c) {
    if (std::find(active.begin(), active.begin() + static_cast<long>(spec.tilings),
                  spec.duplication_indices[c]) != active.begin() + static_cast<long>(spec.tilings)) {
      active.push_back(base + c);
    }
  }
  return active;
}

Vector tile_features(const TileCoderSpec& spec, std::span<const double> state) {
  Vector phi(spec.dim(), 0.0);
  for (std::size_t i : active_features(spec, state)) phi[i] = 1.0;
  return phi;
}

std::vector<std::size_t> spread_duplication_indices(const TileCoderSpec& spec, std::size_t k) {
  std::vector<std::size_t> out;
  const double base = static_cast<double>(spec.base_dim());
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(static_cast<std::size_t>((static_cast<double>(i) + 0.5) * base / static_cast<double>(k)));
  return out;
}

namespace {

double smallest_singular_value(const Matrix& m) { return svd(m).singular_values.back(); }

Matrix random_features(Rng& rng, std::size_t n, std::size_t d, FeatureMode mode) {
  Matrix phi(n, d);
  if (mode == FeatureMode::random_full_rank) {
    for (double& e : phi.entries()) e = 2.0 * uniform01(rng) - 1.0;
    return phi;
  }
  // Correlated: a strong common positive factor per state plus small
  // feature-specific noise.
  for (std::size_t s = 0; s < n; ++s) {
    const double common = 0.5 + uniform01(rng);
    for (std::size_t k = 0; k < d; ++k) phi(s, k) = 0.8 * common + 0.2 * (2.0 * uniform01(rng) - 1.0);
  }
  return phi;
}

}  // namespace

MdpSpec chain_mdp(std::size_t n_states, double gamma, FeatureMode mode, std::uint64_t seed,
                  std::size_t n_features) {
  if (n_states < 2) throw ConfigError("chain_mdp: need at least 2 states");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("chain_mdp: gamma must lie in [0,1)");
  const std::size_t n = n_states;
  MdpSpec mdp;
  mdp.n_states = n;
  mdp.gamma = gamma;
  mdp.transition = Matrix(n, n);
  for (std::size_t s = 0; s + 1 < n; ++s) {
    mdp.transition(s, s + 1) += kChainForwardProbability;
    mdp.transition(s, s == 0 ? 0 : s - 1) += 1.0 - kChainForwardProbability;
  }
  mdp.transition(n - 1, 0) = 1.0;
  mdp.rewards.assign(n, kChainStepReward);
  mdp.rewards[n - 1] = kChainGoalReward;
  mdp.terminal.assign(n, false);
  mdp.terminal[n - 1] = true;
  mdp.mu = stationary_distribution(mdp.transition);

  const std::size_t d = n_features == 0 ? n : n_features;
  if (mode == FeatureMode::tabular) {
    mdp.features = Matrix::identity(n);
  } else {
    if (d > n) throw ConfigError("chain_mdp: more features than states cannot be full rank");
    bool certified = false;
    for (std::uint64_t attempt = 0; attempt < 10 && !certified; ++attempt) {
      Rng rng(derive_seed(seed, attempt));
      mdp.features = random_features(rng, n, d, mode);
      certified = smallest_singular_value(mdp.features) > 1e-6;
    }
    if (!certified) throw DomainError("chain_mdp: could not certify full-rank features in 10 attempts");
  }
  mdp.validate();
  return mdp;
}

GridWorld::GridWorld(std::size_t rows, std::size_t cols, GridEncoding encoding)
    : rows_(rows), cols_(cols), encoding_(encoding) {
  if (rows * cols < 2) throw ConfigError("GridWorld: need at least two cells");
}

GridStep GridWorld::step(std::size_t cell, std::size_t action) const {
  if (cell >= n_cells() || action >= kActions) throw DomainError("GridWorld::step: bad cell or action");
  std::size_t r = cell / cols_, c = cell % cols_;
  switch (action) {
    case 0: r = r == 0 ? 0 : r - 1; break;
    case 1: c = std::min(c + 1, cols_ - 1); break;
    case 2: r = std::min(r + 1, rows_ - 1); break;
    default: c = c == 0 ? 0 : c - 1; break;
  }
  const std::size_t next = r * cols_ + c;
  const bool done = next == goal();
  return {next, done ? 1.0 : 0.0, done};
}

Vector GridWorld::encode(std::size_t cell) const {
  if (cell >= n_cells()) throw DomainError("GridWorld::encode: bad cell");
  if (encoding_ == GridEncoding::one_hot) {
    Vector e(n_cells(), 0.0);
    e[cell] = 1.0;
    return e;
  }
  const double r = static_cast<double>(cell / cols_);
  const double c = static_cast<double>(cell % cols_);
  return {rows_ > 1 ? r / static_cast<double>(rows_ - 1) : 0.0,
          cols_ > 1 ? c / static_cast<double>(cols_ - 1) : 0.0};
}

Matrix GridWorld::evaluation_states() const {
  Matrix out(n_cells() - 1, input_dim());
  for (std::size_t cell = 0; cell + 1 < n_cells(); ++cell) {
    const Vector e = encode(cell);
    std::copy(e.begin(), e.end(), out.row(cell).begin());
  }
  return out;
}

ControlProblem GridWorld::control_problem() const {
  ControlProblem p;
  p.n_states = n_cells();
  p.n_actions = kActions;
  for (std::size_t s = 0; s < n_cells(); ++s) {
    for (std::size_t a = 0; a < kActions; ++a) {
      if (s == goal()) {
        p.next.push_back(s);
        p.reward.push_back(0.0);
        p.done.push_back(true);
        continue;
      }
      const GridStep st = step(s, a);
      p.next.push_back(st.cell);
      p.reward.push_back(st.reward);
      p.done.push_back(st.done);
    }
  }
  return p;
}

}  // namespace decorr::envs
