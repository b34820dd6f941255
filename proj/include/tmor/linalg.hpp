#pragma once

// Dense real matrices and the singular-value machinery used by the POD
// baseline. Everything is 64-bit and row-major.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmor/error.hpp"

namespace tmor::linalg {

using Vector = std::vector<double>;

/// Row-major dense matrix; element (i, j) lives at data[i * cols + j].
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorCode::invalid_input, "matrix data length does not match shape");
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw Error(ErrorCode::invalid_input, "ragged row list");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector column(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  void set_column(std::size_t j, std::span<const double> values) {
    if (values.size() != rows_) throw Error(ErrorCode::invalid_input, "column length mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::invalid_input, "matmul shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::invalid_input, "subtract shape mismatch");
  Matrix c = a;
  auto cd = c.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

inline double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

/// A^T A.
inline Matrix gram(const Matrix& a) {
  const std::size_t m = a.cols();
  Matrix g(m, m);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto r = a.row(k);
    for (std::size_t i = 0; i < m; ++i) {
      const double ri = r[i];
      if (ri == 0.0) continue;
      auto grow = g.row(i);
      for (std::size_t j = i; j < m; ++j) grow[j] += ri * r[j];
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

/// ||a - b||_2 / ||a||_2. Throws degenerate_reference when a is the zero vector.
inline double relative_l2(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::invalid_input, "relative_l2 length mismatch");
  const double ref = norm2(a);
  if (ref == 0.0) throw Error(ErrorCode::degenerate_reference, "reference vector has zero norm");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s) / ref;
}

struct SymmetricEigen {
  Vector values;   // non-increasing
  Matrix vectors;  // column k belongs to values[k]
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Converged once every
/// off-diagonal magnitude is below `tol * ||A||_F`.
inline SymmetricEigen jacobi_eigen(Matrix a, double tol = 1e-12, int max_sweeps = 100) {
  const std::size_t n = a.rows();
  if (n == 0 || a.cols() != n) throw Error(ErrorCode::invalid_input, "jacobi_eigen needs a square matrix");
  Matrix v = Matrix::identity(n);
  const double threshold = tol * frobenius_norm(a);

  auto max_offdiag = [&] {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) m = std::max(m, std::abs(a(i, j)));
    return m;
  };

  int sweep = 0;
  while (max_offdiag() >= threshold && threshold > 0.0) {
    if (sweep == max_sweeps) {
      throw Error(ErrorCode::convergence_failure,
                  "Jacobi sweeps exceeded cap of " + std::to_string(max_sweeps));
    }
    ++sweep;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  out.sweeps = sweep;
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

struct SvdResult {
  Vector singular_values;  // full spectrum from the Gram route, non-increasing
  Matrix left_vectors;     // n x k, orthonormal columns for sigma > rank_tolerance * sigma_1
  double rank_tolerance = 1e-12;

  std::size_t rank() const noexcept { return left_vectors.cols(); }
};

/// Singular values and left singular vectors by the method of snapshots:
/// eigendecompose S^T S, then u_i = S v_i / sigma_i.
///
/// sigma_i is taken as |S v_i| rather than sqrt(lambda_i). Both agree in exact
/// arithmetic, but the square root of a Gram eigenvalue cannot resolve
/// anything below about sqrt(eps) * sigma_1, while |S v_i| is accurate to
/// about eps * |S|. Left vectors get two passes of modified Gram-Schmidt so
/// the directions with tiny sigma stay orthonormal. The sign of each vector is
/// fixed so that its entry of largest magnitude is positive.
inline SvdResult snapshot_svd(const Matrix& s, double rank_tolerance = 1e-12) {
  if (s.empty()) throw Error(ErrorCode::invalid_input, "snapshot_svd of an empty matrix");
  if (!s.all_finite()) throw Error(ErrorCode::invalid_input, "snapshot matrix has non-finite entries");

  const std::size_t n = s.rows();
  const std::size_t m = s.cols();
  const SymmetricEigen eig = jacobi_eigen(gram(s));

  std::vector<Vector> images(m, Vector(n, 0.0));
  Vector sigma(m);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = s.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += r[j] * eig.vectors(j, k);
      images[k][i] = acc;
    }
    sigma[k] = norm2(images[k]);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  SvdResult out;
  out.rank_tolerance = rank_tolerance;
  out.singular_values.resize(m);
  for (std::size_t k = 0; k < m; ++k) out.singular_values[k] = sigma[order[k]];

  const double sigma1 = out.singular_values.front();
  std::vector<Vector> cols;
  for (std::size_t k = 0; k < m && k < n; ++k) {
    const double sk = out.singular_values[k];
    if (!(sk > rank_tolerance * sigma1) || sk == 0.0) break;
    Vector u = images[order[k]];
    for (double& x : u) x /= sk;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : cols) {
        const double proj = dot(q, u);
        for (std::size_t i = 0; i < n; ++i) u[i] -= proj * q[i];
      }
      const double nrm = norm2(u);
      if (nrm == 0.0) break;
      for (double& x : u) x /= nrm;
    }
    if (norm2(u) == 0.0) break;
    const auto big = std::max_element(u.begin(), u.end(),
                                      [](double x, double y) { return std::abs(x) < std::abs(y); });
    if (*big < 0.0)
      for (double& x : u) x = -x;
    cols.push_back(std::move(u));
  }

  out.left_vectors = Matrix(n, cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) out.left_vectors.set_column(k, cols[k]);
  return out;
}

/// sqrt(sum_{j > r} sigma_j^2), the Frobenius error of the best rank-r approximation.
inline double truncation_error_frobenius(const SvdResult& svd, std::size_t r) {
  const auto& sv = svd.singular_values;
  double s = 0.0;
  for (std::size_t j = sv.size(); j > r; --j) s += sv[j - 1] * sv[j - 1];
  return std::sqrt(s);
}

/// First `r` columns of `a`.
inline Matrix leading_columns(const Matrix& a, std::size_t r) {
  if (r > a.cols()) throw Error(ErrorCode::invalid_input, "not enough columns");
  Matrix out(a.rows(), r);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < r; ++j) out(i, j) = a(i, j);
  return out;
}

/// V V^T X for V with orthonormal columns.
inline Matrix project(const Matrix& v, const Matrix& x) {
  return matmul(v, matmul(transpose(v), x));
}

}  // namespace tmor::linalg
