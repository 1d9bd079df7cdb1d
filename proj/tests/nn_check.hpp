#pragma once

// Finite-difference check of every network parameter against backward().

#include <algorithm>
#include <cmath>

#include "decorr/mlp.hpp"
#include "decorr/random.hpp"

namespace testing {

/// Toy net with random widths, batch, actions and targets.
struct ToyProblem {
  decorr::nn::MlpParams params;
  decorr::nn::Minibatch batch;
  double lambda = 0.0;
};

inline ToyProblem make_toy_problem(std::uint64_t seed) {
  decorr::Rng rng(seed);
  ToyProblem p;
  const std::size_t in = 1 + decorr::uniform_index(rng, 4);
  const std::size_t hidden = 2 + decorr::uniform_index(rng, 5);
  const std::size_t feat = 2 + decorr::uniform_index(rng, 5);
  const std::size_t actions = 1 + decorr::uniform_index(rng, 3);
  const std::size_t n = 1 + decorr::uniform_index(rng, 6);
  const std::size_t widths[] = {in, hidden, feat};
  p.params = decorr::nn::MlpParams::init(widths, actions, rng);
  p.batch.states = decorr::Matrix(n, in);
  for (double& e : p.batch.states.entries()) e = 2.0 * decorr::uniform01(rng) - 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    p.batch.actions.push_back(decorr::uniform_index(rng, actions));
    p.batch.targets.push_back(2.0 * decorr::uniform01(rng) - 1.0);
  }
  p.lambda = seed % 5 == 0 ? 0.0 : std::pow(10.0, -3.0 * decorr::uniform01(rng));
  return p;
}

/// Largest per-parameter relative error |g − fd| / max(1, |g|).
inline double nn_gradient_error(const decorr::nn::MlpParams& params, const decorr::nn::Minibatch& batch,
                                double lambda, double h = 1e-6) {
  using namespace decorr::nn;
  const BackwardResult analytic = backward(params, batch, lambda);
  GradientTape tape = analytic.tape;
  MlpParams probe = params;
  const auto p = parameter_pointers(probe);
  const auto g = parameter_pointers(tape);
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double saved = *p[k];
    *p[k] = saved + h;
    const double up = objective(probe, batch, lambda);
    *p[k] = saved - h;
    const double down = objective(probe, batch, lambda);
    *p[k] = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(*g[k] - fd) / std::max(1.0, std::abs(*g[k])));
  }
  return worst;
}

}  // namespace testing
