#include <doctest.h>

#include <cmath>

#include "decorr/errors.hpp"
#include "decorr/matrix.hpp"
#include "support.hpp"

using namespace decorr;
using testing::max_abs_entry;

namespace {

double reconstruction_error(const Matrix& m, const SvdResult& r) {
  Matrix usv(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      for (std::size_t k = 0; k < r.singular_values.size(); ++k)
        usv(i, j) += r.u(i, k) * r.singular_values[k] * r.v(j, k);
  const double denom = std::max(frobenius_norm(m), 1e-300);
  return frobenius_norm(usv - m) / denom;
}

}  // namespace

TEST_CASE("matmul examples") {
  const Matrix m{{1, 2}, {3, 4}};
  CHECK(matmul(Matrix::identity(2), m) == m);
  CHECK(matmul(m, Matrix{{1, 0}, {0, 1}}) == m);
  CHECK(matmul(m, Matrix{{5}, {6}}) == Matrix{{17}, {39}});
  const Matrix m3{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  CHECK(matmul(Matrix::identity(3), m3) == m3);
}

TEST_CASE("matmul dimension error names both shapes") {
  try {
    (void)matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("2x3") != std::string::npos);
  }
}

TEST_CASE("matmul matches a naive triple loop exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = 1 + uniform_index(rng, 7), k = 1 + uniform_index(rng, 7), c = 1 + uniform_index(rng, 7);
    const Matrix a = testing::random_matrix(rng, r, k), b = testing::random_matrix(rng, k, c);
    CHECK(matmul(a, b) == testing::naive_product(a, b));
  }
}

TEST_CASE("svd examples") {
  const SvdResult id = svd(Matrix::identity(2));
  CHECK(id.singular_values[0] == doctest::Approx(1.0));
  CHECK(id.singular_values[1] == doctest::Approx(1.0));
  CHECK(max_abs_entry(testing::orthogonality_gap(matmul(id.u, id.v.transpose()))) < 1e-12);

  const SvdResult d = svd(Matrix{{3, 0}, {0, 2}});
  CHECK(d.singular_values[0] == doctest::Approx(3.0));
  CHECK(d.singular_values[1] == doctest::Approx(2.0));

  Rng rng(4);
  const Matrix m = testing::random_matrix(rng, 4, 4);
  CHECK(reconstruction_error(m, svd(m)) < 1e-9);
}

TEST_CASE("svd property: 1000 seeded matrices up to 8x8") {
  Rng rng(2024);
  double worst_recon = 0.0, worst_orth = 0.0;
  bool sorted = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = 1 + uniform_index(rng, 8), c = 1 + uniform_index(rng, 8);
    Matrix m = testing::random_matrix(rng, r, c, 3.0);
    // Occasionally force rank deficiency by copying a column.
    if (c > 1 && trial % 7 == 0)
      for (std::size_t i = 0; i < r; ++i) m(i, c - 1) = m(i, 0);
    const SvdResult s = svd(m);
    worst_recon = std::max(worst_recon, reconstruction_error(m, s));
    worst_orth = std::max(worst_orth, max_abs_entry(testing::orthogonality_gap(s.u)));
    worst_orth = std::max(worst_orth, max_abs_entry(testing::orthogonality_gap(s.v)));
    for (std::size_t k = 1; k < s.singular_values.size(); ++k)
      sorted = sorted && s.singular_values[k] <= s.singular_values[k - 1];
    for (double sv : s.singular_values) sorted = sorted && sv >= 0.0;
  }
  CHECK(worst_recon < 1e-9);
  CHECK(worst_orth < 1e-10);
  CHECK(sorted);
}

TEST_CASE("svd rejects non-finite input") {
  Matrix m{{1, 2}, {3, 4}};
  m(0, 1) = std::nan("");
  CHECK_THROWS_AS(svd(m), DomainError);
}

TEST_CASE("sym_eigen examples") {
  const SymEigenResult a = sym_eigen(Matrix{{5, 0}, {0, 1}});
  CHECK(a.eigenvalues[0] == doctest::Approx(5.0));
  CHECK(a.eigenvalues[1] == doctest::Approx(1.0));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(a.eigenvectors(i, j)) == doctest::Approx(i == j ? 1.0 : 0.0));

  const SymEigenResult b = sym_eigen(Matrix{{2, 1}, {1, 2}});
  CHECK(b.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(b.eigenvalues[1] == doctest::Approx(1.0));

  const SymEigenResult c = sym_eigen(Matrix::identity(4));
  for (double e : c.eigenvalues) CHECK(e == doctest::Approx(1.0));
}

TEST_CASE("sym_eigen diagonalizes random symmetric matrices") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 8);
    const Matrix m = testing::random_symmetric_psd(rng, d) - Matrix::identity(d) * 2.0;
    const SymEigenResult r = sym_eigen(m);
    CHECK(max_abs_entry(testing::orthogonality_gap(r.eigenvectors)) < 1e-10);
    Matrix vmv = testing::naive_product(testing::naive_product(r.eigenvectors.transpose(), m), r.eigenvectors);
    for (std::size_t i = 0; i < d; ++i) vmv(i, i) = 0.0;
    CHECK(max_abs_entry(vmv) < 1e-9);
  }
}

TEST_CASE("sym_eigen reports asymmetry") {
  try {
    (void)sym_eigen(Matrix{{1, 2}, {2.5, 1}});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("0.5") != std::string::npos);
  }
}

TEST_CASE("covariance examples") {
  CHECK(covariance(Matrix::identity(2), Vector{0.5, 0.5}) == Matrix{{0.5, 0}, {0, 0.5}});
  CHECK(covariance(Matrix{{1, 1}, {1, 1}}, Vector{0.5, 0.5}) == Matrix{{1, 1}, {1, 1}});
  CHECK(covariance(Matrix{{1, 2}, {3, 4}}, Vector{1, 1}) == Matrix{{10, 14}, {14, 20}});
  CHECK_THROWS_AS(covariance(Matrix::identity(2), Vector{1, -0.1}), DomainError);
}

TEST_CASE("covariance is symmetric PSD for non-negative weights") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + uniform_index(rng, 10), d = 1 + uniform_index(rng, 6);
    const Matrix phi = testing::random_matrix(rng, n, d);
    const Matrix c = covariance(phi, testing::random_distribution(rng, n));
    CHECK(max_abs_entry(c - c.transpose()) <= 1e-12);
    for (double e : sym_eigen(c).eigenvalues) CHECK(e >= -1e-10);
  }
}

TEST_CASE("gram examples") {
  CHECK(gram(Matrix::identity(2)) == Matrix::identity(2));
  CHECK(gram(Matrix{{1, 2}, {3, 4}}) == Matrix{{5, 11}, {11, 25}});
  CHECK(gram(Matrix{{1, 2, 3}}) == Matrix{{14}});
}

TEST_CASE("off_diagonal_sq_sum examples") {
  CHECK(off_diagonal_sq_sum(Matrix{{7, 0}, {0, 9}}) == 0.0);
  CHECK(off_diagonal_sq_sum(Matrix{{10, 14}, {14, 20}}) == 392.0);
  CHECK(off_diagonal_sq_sum(Matrix{{0, 1}, {2, 0}}) == 5.0);
  CHECK_THROWS_AS(off_diagonal_sq_sum(Matrix(2, 3)), DimensionError);
}

TEST_CASE("weighted trace identity: d×d path equals n×n path") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + uniform_index(rng, 12), d = 1 + uniform_index(rng, 12);
    const Matrix phi = testing::random_matrix(rng, n, d);
    const Vector w = testing::random_distribution(rng, n);
    const Matrix c = covariance(phi, w);
    const double small = trace(matmul(c, c));
    // Weighted Gram K = D^½ Φ Φᵀ D^½.
    Matrix scaled = phi;
    for (std::size_t i = 0; i < n; ++i)
      for (double& e : scaled.row(i)) e *= std::sqrt(w[i]);
    const Matrix k = gram(scaled);
    const double large = trace(matmul(k, k));
    CHECK(std::abs(small - large) <= 1e-9 * std::max(1.0, std::abs(small)));
  }
}

TEST_CASE("solve recovers a known solution") {
  Rng rng(3);
  const Matrix a = testing::random_matrix(rng, 5, 5) + Matrix::identity(5) * 3.0;
  const Vector x = testing::random_vector(rng, 5);
  const Vector b = matvec(a, x);
  const Vector y = solve(a, b);
  for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
  CHECK_THROWS(solve(Matrix{{1, 2}, {2, 4}}, Vector{1, 1}));
}
