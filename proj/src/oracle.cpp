#include "decorr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "decorr/errors.hpp"

namespace decorr::oracle {

Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& at,
                   double h) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (std::size_t i = 0; i < at.rows(); ++i) {
    for (std::size_t j = 0; j < at.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe);
      probe(i, j) = orig - h;
      const double down = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  double diff = 0.0;
  double scale = 1.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff = std::max(diff, std::abs(analytic.entries()[k] - numeric.entries()[k]));
    scale = std::max(scale, std::abs(analytic.entries()[k]));
  }
  return diff / scale;
}

namespace {

// Gaussian elimination with partial pivoting; reports the ratio of largest
// to smallest pivot as a cheap condition estimate.
Vector eliminate(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  double max_pivot = 0.0, min_pivot = INFINITY;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a[i][k]) > std::fabs(a[best][k])) best = i;
    std::swap(a[k], a[best]);
    std::swap(b[k], b[best]);
    const double pivot = std::fabs(a[k][k]);
    max_pivot = std::max(max_pivot, pivot);
    min_pivot = std::min(min_pivot, pivot);
    if (pivot == 0.0 || pivot < 1e-13 * max_pivot) {
      std::ostringstream msg;
      msg << "td_fixed_point: singular system (condition estimate " << max_pivot / pivot << " from pivot ratio)";
      throw DomainError(msg.str());
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * x[j];
    x[k] = s / a[k][k];
  }
  return x;
}

}  // namespace

Vector td_fixed_point(const MdpSpec& mdp) {
  const std::size_t n = mdp.n_states;
  const std::size_t d = mdp.features.cols();

  // Expected next-state features, masked after terminal states.
  std::vector<std::vector<double>> next(n, std::vector<double>(d, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    if (mdp.terminal[s]) continue;
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t k = 0; k < d; ++k) next[s][k] += mdp.transition(s, t) * mdp.features(t, k);
  }

  std::vector<std::vector<double>> lhs(d, std::vector<double>(d, 0.0));
  std::vector<double> rhs(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      const double w = mdp.mu[s] * mdp.features(s, i);
      rhs[i] += w * mdp.rewards[s];
      for (std::size_t j = 0; j < d; ++j)
        lhs[i][j] += w * (mdp.features(s, j) - mdp.gamma * next[s][j]);
    }
  }

  Vector theta = eliminate(lhs, rhs);
  // One round of iterative refinement.
  std::vector<double> residual(d);
  for (std::size_t i = 0; i < d; ++i) {
    double r = rhs[i];
    for (std::size_t j = 0; j < d; ++j) r -= lhs[i][j] * theta[j];
    residual[i] = r;
  }
  const Vector correction = eliminate(lhs, residual);
  for (std::size_t i = 0; i < d; ++i) theta[i] += correction[i];
  return theta;
}

double msve(const MdpSpec& mdp, const Vector& theta) {
  const std::size_t d = mdp.features.cols();
  auto value = [&](std::size_t s) {
    double v = 0.0;
    for (std::size_t k = 0; k < d; ++k) v += mdp.features(s, k) * theta[k];
    return v;
  };
  double total = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t t = 0; t < mdp.n_states; ++t) {
      const double p = mdp.transition(s, t);
      if (p == 0.0) continue;
      const double bootstrap = mdp.terminal[s] ? 0.0 : mdp.gamma * value(t);
      const double delta = mdp.rewards[s] + bootstrap - value(s);
      total += mdp.mu[s] * p * delta * delta;
    }
  }
  return 0.5 * total;
}

double frozen_target_loss(const Matrix& a, const Vector& theta, const std::vector<Sample>& samples,
                          double gamma, const Vector& target_weights, double lambda) {
  const std::size_t d = a.rows();
  double td = 0.0;
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (const Sample& t : samples) {
    double boot = 0.0, pred = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (!t.terminal) boot += t.phi_next[i] * target_weights[i];
      for (std::size_t j = 0; j < d; ++j) pred += t.phi[i] * a(i, j) * theta[j];
    }
    const double delta = t.reward + gamma * boot - pred;
    td += 0.5 * t.weight * delta * delta;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) c[i][j] += t.weight * t.phi[i] * t.phi[j];
  }
  double reg = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) s += a(p, i) * c[p][q] * a(q, j);
      reg += s * s;
    }
  }
  return td + 0.5 * lambda * reg;
}

Matrix brute_reg_gradient(const Matrix& a, const Matrix& cov, double lambda) {
  const std::size_t d = a.rows();
  // C·A and Aᵀ·C·A by explicit triple loops.
  std::vector<std::vector<double>> ca(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) ca[i][j] += cov(i, k) * a(k, j);
  std::vector<std::vector<double>> act(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) act[i][j] += a(k, i) * ca[k][j];

  Matrix grad(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double sigma = act[i][j];
      // C·A·e_j e_iᵀ puts column j of CA into column i; the other term
      // puts column i into column j.
      for (std::size_t r = 0; r < d; ++r) {
        grad(r, i) += lambda * sigma * ca[r][j];
        grad(r, j) += lambda * sigma * ca[r][i];
      }
    }
  }
  return grad;
}

Vector value_iteration(const MdpSpec& mdp, double tol) {
  const std::size_t n = mdp.n_states;
  Vector v(n, 0.0);
  for (std::size_t iter = 0; iter < 1'000'000; ++iter) {
    Vector next(n, 0.0);
    double gap = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double expected = 0.0;
      if (!mdp.terminal[s])
        for (std::size_t t = 0; t < n; ++t) expected += mdp.transition(s, t) * v[t];
      next[s] = mdp.rewards[s] + mdp.gamma * expected;
      gap = std::max(gap, std::fabs(next[s] - v[s]));
    }
    v = std::move(next);
    if (gap < tol) return v;
  }
  return v;
}

Vector optimal_values(const ControlProblem& problem, double gamma, double tol) {
  Vector v(problem.n_states, 0.0);
  for (std::size_t iter = 0; iter < 1'000'000; ++iter) {
    Vector next(problem.n_states, 0.0);
    double gap = 0.0;
    for (std::size_t s = 0; s < problem.n_states; ++s) {
      double best = -INFINITY;
      for (std::size_t a = 0; a < problem.n_actions; ++a) {
        const std::size_t k = s * problem.n_actions + a;
        const double q = problem.reward[k] + (problem.done[k] ? 0.0 : gamma * v[problem.next[k]]);
        best = std::max(best, q);
      }
      next[s] = best;
      gap = std::max(gap, std::fabs(next[s] - v[s]));
    }
    v = std::move(next);
    if (gap < tol) return v;
  }
  return v;
}

}  // namespace decorr::oracle
