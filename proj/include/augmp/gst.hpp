#pragma once

// Graph spectral transformation: project benign features onto the GFT basis
// of the observed graph and re-synthesize them on the basis of the
// reconstructed graph.

#include <optional>
#include <string_view>

#include "augmp/mathcore.hpp"
#include "augmp/rng.hpp"

namespace augmp {

struct SpectralBasis {
  Matrix laplacian;
  Matrix basis;  // columns are eigenvectors
  Vector eigenvalues;  // ascending
};

/// Combinatorial Laplacian diag(rowsum(A)) - A.
Matrix laplacian(const Matrix& adjacency);
Matrix clamp_nonnegative(const Matrix& adjacency);

SpectralBasis gft_basis(const Matrix& laplacian);

/// S = F B.
Matrix spectral_coeffs(const Matrix& features, const SpectralBasis& basis);
/// F_hat = S B_hat^T.
Matrix reconstruct_features(const Matrix& coeffs, const SpectralBasis& basis_hat);

enum class RowPolicy { kRandom, kCycle, kNearestGlobal };

RowPolicy parse_row_policy(std::string_view name);
std::string_view to_string(RowPolicy policy);

struct RowChoice {
  std::size_t row = 0;
  Vector values;
};

/// Picks one row of F_hat. kNearestGlobal needs `predicted_global` restricted
/// to the selected coordinates.
RowChoice initial_malicious(const Matrix& f_hat, RowPolicy policy, std::size_t adversary_index,
                            SeededRng rng, const std::optional<Vector>& predicted_global = {});

/// Full-length update: `selected_values` at `selected`, `fill` elsewhere.
Vector scatter_selected(std::span<const double> selected_values,
                        const std::vector<std::size_t>& selected, const Vector& fill);

}  // namespace augmp
