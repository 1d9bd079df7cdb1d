#pragma once

// Seeded generators shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "decorr/decorrelation.hpp"
#include "decorr/matrix.hpp"
#include "decorr/mdp.hpp"
#include "decorr/random.hpp"

namespace testing {

using decorr::Matrix;
using decorr::Rng;
using decorr::Vector;

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * decorr::uniform01(rng); }

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& e : m.entries()) e = uniform(rng, -scale, scale);
  return m;
}

inline Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vector v(n);
  for (double& e : v) e = uniform(rng, -scale, scale);
  return v;
}

inline Vector random_distribution(Rng& rng, std::size_t n) {
  Vector w(n);
  double total = 0.0;
  for (double& e : w) total += (e = uniform(rng, 0.05, 1.0));
  for (double& e : w) e /= total;
  return w;
}

inline Matrix random_symmetric_psd(Rng& rng, std::size_t d) {
  const Matrix b = random_matrix(rng, d + 2, d);
  Matrix c(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < b.rows(); ++k) c(i, j) += b(k, i) * b(k, j);
  return c;
}

/// n transitions in d dimensions with random weights and roughly a third
/// of them terminal.
inline decorr::WeightedTransitionSet random_transitions(Rng& rng, std::size_t d, std::size_t n,
                                                        double gamma = 0.9) {
  decorr::WeightedTransitionSet data;
  data.gamma = gamma;
  data.weights = random_distribution(rng, n);
  for (std::size_t k = 0; k < n; ++k) {
    decorr::Transition t;
    t.phi = random_vector(rng, d);
    t.phi_next = random_vector(rng, d);
    t.reward = uniform(rng, -1.0, 1.0);
    t.terminal = decorr::uniform01(rng) < 0.3;
    data.transitions.push_back(t);
  }
  return data;
}

/// Random row-stochastic chain with one terminal state and μ stationary.
inline decorr::MdpSpec random_mdp(Rng& rng, std::size_t n, std::size_t d, double gamma = 0.9) {
  decorr::MdpSpec mdp;
  mdp.n_states = n;
  mdp.gamma = gamma;
  mdp.features = random_matrix(rng, n, d);
  mdp.transition = Matrix(n, n);
  for (std::size_t s = 0; s < n; ++s) {
    const Vector row = random_distribution(rng, n);
    for (std::size_t k = 0; k < n; ++k) mdp.transition(s, k) = row[k];
  }
  mdp.rewards = random_vector(rng, n);
  mdp.terminal.assign(n, false);
  mdp.terminal[n - 1] = true;
  mdp.mu = decorr::stationary_distribution(mdp.transition);
  return mdp;
}

/// Naive triple loop, kept independent of the library's matmul.
inline Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double max_abs_entry(const Matrix& m) {
  double r = 0.0;
  for (double e : m.entries()) r = std::max(r, std::abs(e));
  return r;
}

inline Matrix orthogonality_gap(const Matrix& q) {
  Matrix g = naive_product(q.transpose(), q);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return g;
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix with
/// random reflections, so both determinants appear.
inline Matrix random_orthogonal(Rng& rng, std::size_t d) {
  Matrix q(d, d);
  for (double& e : q.entries()) e = decorr::standard_normal(rng);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < d; ++i) q(i, j) -= proj * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
  }
  return q;
}

}  // namespace testing
