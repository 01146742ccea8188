#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace r2n2 {

using Vector = std::vector<double>;

/// Dense row-major matrix for the small (m <= ~100) problems used here.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of row-major entries; throws DimensionError on a size
  /// mismatch and NonFiniteError on NaN/inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  Vector column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> values);

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace linalg {

// Vector helpers. All throw DimensionError on length mismatch.
double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);
double norm_inf(std::span<const double> x);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Vector add(std::span<const double> x, std::span<const double> y);
Vector subtract(std::span<const double> x, std::span<const double> y);
Vector scale(double alpha, std::span<const double> x);

Vector mat_vec(const Matrix& a, std::span<const double> x);
/// A^T x without materializing the transpose.
Vector transpose_mat_vec(const Matrix& a, std::span<const double> x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(double alpha, const Matrix& a);
/// Max-abs entry of A - B.
double max_abs_diff(const Matrix& a, const Matrix& b);

struct QR {
  Matrix q;  ///< rows x cols, orthonormal columns
  Matrix r;  ///< cols x cols, upper triangular
};

/// Thin Householder QR. Requires rows >= cols. Rank deficiency shows up as
/// (near) zero diagonal entries of R rather than an error.
QR householder_qr(const Matrix& a);

/// argmin ||A y - b||_2 via Householder QR. Throws RankDeficientError when a
/// diagonal of R is negligible relative to the largest one.
Vector least_squares(const Matrix& a, std::span<const double> b);

/// Square solve via Gaussian elimination with partial pivoting.
Vector solve(const Matrix& a, std::span<const double> b);

/// Largest singular value by power iteration on A^T A. Stops when the
/// Rayleigh quotient changes by less than 1e-12 relative; throws
/// ConvergenceError after 10 000 iterations.
double spectral_norm(const Matrix& a);

/// Lower Cholesky factor; returns false if A is not positive definite.
bool cholesky(const Matrix& a, Matrix* lower = nullptr);

/// Haar-distributed orthogonal matrix: Gaussian matrix, QR, and a column
/// sign flip so that diag(R) > 0. Deterministic per seed.
Matrix haar_orthogonal(std::size_t dim, std::uint64_t seed);

/// ||Q^T Q - I||_inf entrywise.
double orthogonality_defect(const Matrix& q);

}  // namespace linalg
}  // namespace r2n2
