#include "augmp/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace augmp {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw std::invalid_argument("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("Matrix: data size " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  require_finite(data_, "Matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), cols, std::move(data));
}

Vector Matrix::column(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::frobenius() const { return norm2(data_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_bt: inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at: inner dimension mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("matrix +: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("matrix -: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& x : out.data()) x *= s;
  return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double norm2(std::span<const double> u) { return std::sqrt(dot(u, u)); }

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> values, const std::string& what) {
  if (!all_finite(values)) throw std::invalid_argument(what + ": non-finite entry");
}

CosineResult cosine_checked(std::span<const double> u, std::span<const double> v,
                            ZeroNormPolicy policy) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: length mismatch");
  if (u.empty()) throw std::invalid_argument("cosine: empty input");
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) {
    if (policy == ZeroNormPolicy::kThrow) throw std::domain_error("cosine: zero-norm input");
    return {0.0, true};
  }
  const double c = dot(u, v) / (nu * nv);
  return {std::clamp(c, -1.0, 1.0), false};
}

double cosine(std::span<const double> u, std::span<const double> v, ZeroNormPolicy policy) {
  return cosine_checked(u, v, policy).value;
}

double euclid(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("euclid: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

namespace {

void fix_sign(Matrix& v, std::size_t col) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const double mag = std::abs(v(r, col));
    if (mag > best) {
      best = mag;
      arg = r;
    }
  }
  if (v(arg, col) < 0.0)
    for (std::size_t r = 0; r < v.rows(); ++r) v(r, col) = -v(r, col);
}

}  // namespace

EigenPair sym_eig(const Matrix& s, const EigenOptions& options) {
  if (s.rows() != s.cols()) throw std::invalid_argument("sym_eig: matrix is not square");
  const std::size_t n = s.rows();
  const double scale = std::max(1.0, s.frobenius());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(s(i, j) - s(j, i)) > options.symmetry_tolerance * scale)
        throw std::invalid_argument("sym_eig: matrix is not symmetric");

  Eigen::MatrixXd sym(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      sym(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.5 * (s(i, j) + s(j, i));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("sym_eig: eigensolver did not converge");
  Matrix a(n, n);
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = solver.eigenvalues()(static_cast<Eigen::Index>(i));
    for (std::size_t r = 0; r < n; ++r)
      v(r, i) = solver.eigenvectors()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
  }

  for (std::size_t col = 0; col < n; ++col) fix_sign(v, col);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  // Gauge-fix ordering inside clusters of repeated eigenvalues.
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) spread = std::max(spread, std::abs(a(i, i)));
  const double cluster_tol = 1e-9 * std::max(1.0, spread);
  auto column_greater = [&](std::size_t x, std::size_t y) {
    for (std::size_t r = 0; r < n; ++r) {
      if (v(r, x) != v(r, y)) return v(r, x) > v(r, y);
    }
    return false;
  };
  for (std::size_t begin = 0; begin < n;) {
    std::size_t end = begin + 1;
    while (end < n && a(order[end], order[end]) - a(order[end - 1], order[end - 1]) <= cluster_tol)
      ++end;
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end), column_greater);
    begin = end;
  }

  EigenPair out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

}  // namespace augmp
