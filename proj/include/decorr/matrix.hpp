#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace decorr {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Small by construction: every matrix in this library is at most a few
/// hundred entries on a side, so operations are straightforward loops.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix column(std::span<const double> values);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {entries_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {entries_.data() + r * cols_, cols_};
  }
  Vector col(std::size_t c) const;

  std::span<double> entries() noexcept { return entries_; }
  std::span<const double> entries() const noexcept { return entries_; }

  Matrix transpose() const;
  /// Sum of each row, i.e. M·𝟙.
  Vector row_sums() const;
  Vector diag() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  friend Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
  friend Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
  friend Matrix operator*(Matrix lhs, double scale) { return lhs *= scale; }
  friend Matrix operator*(double scale, Matrix rhs) { return rhs *= scale; }

  bool operator==(const Matrix&) const = default;

  std::string shape() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

struct SvdResult {
  Matrix u;               // m×k, orthonormal columns
  Vector singular_values; // k, non-increasing, non-negative
  Matrix v;               // n×k, orthonormal columns
};

struct SymEigenResult {
  Vector eigenvalues;  // non-increasing
  Matrix eigenvectors; // columns, orthonormal
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
/// aᵀ·x.
Vector matvec_t(const Matrix& a, std::span<const double> x);
Matrix outer(std::span<const double> x, std::span<const double> y);

double dot(std::span<const double> x, std::span<const double> y);
double trace(const Matrix& m);
double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs(std::span<const double> v);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

/// Thin SVD by one-sided Jacobi rotations (tolerance 1e-12, at most 100
/// sweeps). Throws ConvergenceError when the sweep cap is hit.
SvdResult svd(const Matrix& m);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Rejects inputs whose asymmetry exceeds 1e-10.
SymEigenResult sym_eigen(const Matrix& m);

/// Uncentered weighted second moment ΦᵀDΦ with D = diag(weights).
Matrix covariance(const Matrix& phi, std::span<const double> weights);

/// ΦΦᵀ.
Matrix gram(const Matrix& phi);

/// Σ_{i≠j} m_ij².
double off_diagonal_sq_sum(const Matrix& m);

/// Solves the square system a·x = b by Gaussian elimination with partial
/// pivoting. Throws DomainError if a pivot falls below 1e-300.
Vector solve(const Matrix& a, std::span<const double> b);

}  // namespace decorr
