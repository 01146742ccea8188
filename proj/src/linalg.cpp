#include "r2n2/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "r2n2/errors.hpp"
#include "r2n2/rng.hpp"

namespace r2n2 {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: entry count " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw NonFiniteError("Matrix: non-finite entry");
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Vector Matrix::column(std::size_t j) const {
  Vector c(rows_);
  for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
  return c;
}

void Matrix::set_column(std::size_t j, std::span<const double> values) {
  require_same_length(values.size(), rows_, "Matrix::set_column");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
}

namespace linalg {

double dot(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) {
  // Scaled accumulation avoids overflow for the divergence checks.
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double v : x) {
    const double t = v / scale;
    s += t * t;
  }
  return scale * std::sqrt(s);
}

double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_length(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector add(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "add");
  Vector z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] + y[i];
  return z;
}

Vector subtract(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "subtract");
  Vector z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] - y[i];
  return z;
}

Vector scale(double alpha, std::span<const double> x) {
  Vector z(x.begin(), x.end());
  for (double& v : z) v *= alpha;
  return z;
}

Vector mat_vec(const Matrix& a, std::span<const double> x) {
  require_same_length(a.cols(), x.size(), "mat_vec");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

Vector transpose_mat_vec(const Matrix& a, std::span<const double> x) {
  require_same_length(a.rows(), x.size(), "transpose_mat_vec");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) y[j] += row[j] * x[i];
  }
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_same_length(a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
  Matrix c = a;
  auto out = c.data();
  auto in = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
  return c;
}

Matrix scale(double alpha, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.data()) v *= alpha;
  return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

QR householder_qr(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (m < n) throw DimensionError("householder_qr: requires rows >= cols");

  Matrix r = a;
  // Householder vectors, one per column, stored densely.
  std::vector<Vector> reflectors(n);
  for (std::size_t k = 0; k < n; ++k) {
    Vector v(m - k);
    for (std::size_t i = k; i < m; ++i) v[i - k] = r(i, k);
    const double alpha = norm2(v);
    if (alpha == 0.0) continue;  // column already zero below the diagonal
    v[0] += v[0] >= 0.0 ? alpha : -alpha;
    const double vnorm = norm2(v);
    for (double& x : v) x /= vnorm;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i - k] * r(i, j);
      for (std::size_t i = k; i < m; ++i) r(i, j) -= 2.0 * v[i - k] * s;
    }
    reflectors[k] = std::move(v);
  }

  // Accumulate thin Q = H_0 ... H_{n-1} [I_n; 0].
  Matrix q(m, n);
  for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
  for (std::size_t kk = n; kk-- > 0;) {
    const Vector& v = reflectors[kk];
    if (v.empty()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = kk; i < m; ++i) s += v[i - kk] * q(i, j);
      for (std::size_t i = kk; i < m; ++i) q(i, j) -= 2.0 * v[i - kk] * s;
    }
  }

  Matrix rr(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) rr(i, j) = r(i, j);
  return {std::move(q), std::move(rr)};
}

Vector least_squares(const Matrix& a, std::span<const double> b) {
  require_same_length(a.rows(), b.size(), "least_squares");
  const auto [q, r] = householder_qr(a);
  const std::size_t n = a.cols();
  double rmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) rmax = std::max(rmax, std::abs(r(i, i)));
  for (std::size_t i = 0; i < n; ++i) {
    if (rmax == 0.0 || std::abs(r(i, i)) <= 1e-13 * rmax) {
      throw RankDeficientError("least_squares: matrix is rank deficient (column " +
                               std::to_string(i) + ")");
    }
  }
  Vector y = transpose_mat_vec(q, b);
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= r(i, j) * y[j];
    y[i] = s / r(i, i);
  }
  return y;
}

Vector solve(const Matrix& a, std::span<const double> b) {
  if (!a.square()) throw DimensionError("solve: matrix must be square");
  require_same_length(a.rows(), b.size(), "solve");
  const std::size_t n = a.rows();
  Matrix lu = a;
  Vector x(b.begin(), b.end());
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    if (lu(piv, k) == 0.0) throw RankDeficientError("solve: singular matrix");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
      std::swap(x[k], x[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      for (std::size_t j = k; j < n; ++j) lu(i, j) -= f * lu(k, j);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
    x[i] = s / lu(i, i);
  }
  return x;
}

double spectral_norm(const Matrix& a) {
  constexpr double kTol = 1e-12;
  constexpr std::size_t kMaxIter = 10000;
  const std::size_t n = a.cols();
  if (n == 0 || a.rows() == 0) return 0.0;
  for (double v : a.data()) {
    if (!std::isfinite(v)) throw NonFiniteError("spectral_norm: non-finite entry");
  }

  // Generic start vector: irrational increments make exact orthogonality to
  // the dominant singular vector practically impossible.
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 1.0 + std::fmod(0.6180339887498949 * static_cast<double>(i + 1), 1.0);
  }
  double nx = norm2(x);
  for (double& v : x) v /= nx;

  double lambda = 0.0;
  for (std::size_t it = 1; it <= kMaxIter; ++it) {
    Vector y = transpose_mat_vec(a, mat_vec(a, x));
    const double next = dot(x, y);  // Rayleigh quotient of A^T A
    const double ny = norm2(y);
    if (ny == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
    if (it > 1 && std::abs(next - lambda) <= kTol * std::abs(next)) {
      return std::sqrt(std::max(next, 0.0));
    }
    lambda = next;
  }
  throw ConvergenceError("spectral_norm: power iteration did not converge after " +
                             std::to_string(kMaxIter) + " iterations",
                         kMaxIter);
}

bool cholesky(const Matrix& a, Matrix* lower) {
  if (!a.square()) throw DimensionError("cholesky: matrix must be square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  if (lower != nullptr) *lower = std::move(l);
  return true;
}

Matrix haar_orthogonal(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw DimensionError("haar_orthogonal: dim must be >= 1");
  Rng rng(seed);
  Matrix g(dim, dim);
  for (double& v : g.data()) v = rng.normal();
  auto [q, r] = householder_qr(g);
  for (std::size_t j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) {
      for (std::size_t i = 0; i < dim; ++i) q(i, j) = -q(i, j);
    }
  }
  return q;
}

double orthogonality_defect(const Matrix& q) {
  const Matrix qtq = matmul(transpose(q), q);
  return max_abs_diff(qtq, Matrix::identity(q.cols()));
}

}  // namespace linalg
}  // namespace r2n2
