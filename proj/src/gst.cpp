#include "augmp/gst.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace augmp {

Matrix laplacian(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw std::invalid_argument("laplacian: not square");
  const std::size_t n = adjacency.rows();
  const double scale = std::max(1.0, adjacency.frobenius());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(adjacency(i, j) - adjacency(j, i)) > 1e-12 * scale)
        throw std::invalid_argument("laplacian: adjacency is not symmetric");
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      degree += adjacency(i, j);
      l(i, j) = -adjacency(i, j);
    }
    l(i, i) += degree;
  }
  return l;
}

Matrix clamp_nonnegative(const Matrix& adjacency) {
  Matrix out = adjacency;
  for (double& v : out.data()) v = std::max(v, 0.0);
  return out;
}

SpectralBasis gft_basis(const Matrix& lap) {
  EigenPair eig = sym_eig(lap);
  return {lap, std::move(eig.vectors), std::move(eig.values)};
}

Matrix spectral_coeffs(const Matrix& features, const SpectralBasis& basis) {
  if (features.cols() != basis.basis.rows())
    throw std::invalid_argument("spectral_coeffs: feature width does not match basis");
  return matmul(features, basis.basis);
}

Matrix reconstruct_features(const Matrix& coeffs, const SpectralBasis& basis_hat) {
  if (coeffs.cols() != basis_hat.basis.cols())
    throw std::invalid_argument("reconstruct_features: coefficient width does not match basis");
  return matmul_bt(coeffs, basis_hat.basis);
}

RowPolicy parse_row_policy(std::string_view name) {
  if (name == "random") return RowPolicy::kRandom;
  if (name == "cycle") return RowPolicy::kCycle;
  if (name == "nearest-global") return RowPolicy::kNearestGlobal;
  throw std::invalid_argument("unknown row policy '" + std::string(name) + "'");
}

std::string_view to_string(RowPolicy policy) {
  switch (policy) {
    case RowPolicy::kRandom: return "random";
    case RowPolicy::kCycle: return "cycle";
    case RowPolicy::kNearestGlobal: return "nearest-global";
  }
  return "random";
}

RowChoice initial_malicious(const Matrix& f_hat, RowPolicy policy, std::size_t adversary_index,
                            SeededRng rng, const std::optional<Vector>& predicted_global) {
  if (f_hat.rows() == 0) throw std::invalid_argument("initial_malicious: empty feature matrix");
  std::size_t row = 0;
  switch (policy) {
    case RowPolicy::kRandom:
      row = rng.uniform_index(f_hat.rows());
      break;
    case RowPolicy::kCycle:
      row = adversary_index % f_hat.rows();
      break;
    case RowPolicy::kNearestGlobal: {
      if (!predicted_global)
        throw std::invalid_argument("initial_malicious: nearest-global needs a predicted global");
      double best = -2.0;
      for (std::size_t r = 0; r < f_hat.rows(); ++r) {
        const double c = cosine(f_hat.row(r), *predicted_global);
        if (c > best) {
          best = c;
          row = r;
        }
      }
      break;
    }
  }
  auto values = f_hat.row(row);
  return {row, Vector(values.begin(), values.end())};
}

Vector scatter_selected(std::span<const double> selected_values,
                        const std::vector<std::size_t>& selected, const Vector& fill) {
  if (selected_values.size() != selected.size())
    throw std::invalid_argument("scatter_selected: value count does not match selection");
  Vector out = fill;
  for (std::size_t m = 0; m < selected.size(); ++m) out.at(selected[m]) = selected_values[m];
  return out;
}

}  // namespace augmp
