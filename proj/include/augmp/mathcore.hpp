#pragma once

// Dense linear algebra and update-geometry metrics shared by every module.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace augmp {

using Vector = std::vector<double>;

/// Row-major dense matrix of finite doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Throws std::invalid_argument on a size mismatch or a non-finite entry.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vector column(std::size_t c) const;

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Matrix transpose() const;
  double frobenius() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_at(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> u);

/// Throws std::invalid_argument naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);
bool all_finite(std::span<const double> values);

enum class ZeroNormPolicy { kZero, kThrow };

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // one of the inputs had zero norm
};

CosineResult cosine_checked(std::span<const double> u, std::span<const double> v,
                            ZeroNormPolicy policy = ZeroNormPolicy::kZero);
double cosine(std::span<const double> u, std::span<const double> v,
              ZeroNormPolicy policy = ZeroNormPolicy::kZero);
double euclid(std::span<const double> u, std::span<const double> v);

/// Eigenvalues ascending; eigenvector k is column k of `vectors`.
struct EigenPair {
  Vector values;
  Matrix vectors;
};

struct EigenOptions {
  double symmetry_tolerance = 1e-9;
};

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
///
/// The eigenvector gauge is fixed: the largest-magnitude entry of each vector
/// is nonnegative (lowest index wins ties). Within a cluster of repeated
/// eigenvalues, vectors are ordered by their first differing entry, larger
/// first. This makes output a deterministic function of the input but does
/// not make degenerate eigenspaces unique.
EigenPair sym_eig(const Matrix& s, const EigenOptions& options = {});

}  // namespace augmp
