#include "decorr/gram.hpp"

#include <cmath>

#include "decorr/errors.hpp"

namespace decorr {

GramPenaltyReport gram_penalty(const Matrix& phi, GramCost* cost) {
  const std::size_t n = phi.rows();
  const std::size_t d = phi.cols();
  GramPenaltyReport out;
  std::size_t macs = 0;

  // Upper triangle of G, one entry at a time; no n×n or d×d buffer.
  for (std::size_t i = 0; i < n; ++i) {
    auto ri = phi.row(i);
    for (std::size_t j = i; j < n; ++j) {
      auto rj = phi.row(j);
      double g = 0.0;
      for (std::size_t k = 0; k < d; ++k) g += ri[k] * rj[k];
      macs += d;
      if (i == j) {
        out.feature_norm_term += g * g;
      } else {
        out.cross_sample_term += 2.0 * g * g;
      }
    }
  }

  Vector var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto ri = phi.row(i);
    for (std::size_t k = 0; k < d; ++k) var[k] += ri[k] * ri[k];
  }
  macs += n * d;
  for (double v : var) out.variance_term += v * v;
  macs += d;

  out.penalty = out.feature_norm_term + out.cross_sample_term - out.variance_term;
  if (cost) {
    cost->multiply_adds = macs;
    cost->scratch_elements = var.size();
  }
  return out;
}

Matrix gram_penalty_gradient(const Matrix& phi) {
  const std::size_t n = phi.rows();
  const std::size_t d = phi.cols();
  const Matrix g = gram(phi);
  Vector var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) var[k] += phi(i, k) * phi(i, k);

  Matrix grad = matmul(g, phi);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) grad(i, k) = 4.0 * (grad(i, k) - phi(i, k) * var[k]);
  return grad;
}

double sparsity(const Matrix& phi, double epsilon) {
  if (epsilon < 0.0) throw DomainError("sparsity: epsilon must be non-negative");
  if (phi.empty()) return 1.0;
  std::size_t active = 0;
  for (double v : phi.entries())
    if (std::abs(v) > epsilon) ++active;
  return 1.0 - static_cast<double>(active) / static_cast<double>(phi.size());
}

double mean_abs_off_diagonal_gram(const Matrix& phi) {
  const std::size_t n = phi.rows();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) total += 2.0 * std::abs(dot(phi.row(i), phi.row(j)));
  return total / static_cast<double>(n * (n - 1));
}

}  // namespace decorr
