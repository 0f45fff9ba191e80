#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "augmp/gst.hpp"
#include "helpers.hpp"

using namespace augmp;

namespace {
Matrix random_graph(std::size_t n, SeededRng rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = rng.uniform();
  return a;
}
}  // namespace

TEST_CASE("laplacian: path, empty and row sums") {
  CHECK(laplacian(Matrix(2, 2, {0, 1, 1, 0})) == Matrix(2, 2, {1, -1, -1, 1}));
  CHECK(laplacian(Matrix(3, 3)) == Matrix(3, 3));
  const Matrix l = laplacian(random_graph(9, SeededRng(1)));
  for (std::size_t i = 0; i < 9; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 9; ++j) s += l(i, j);
    CHECK(std::abs(s) <= 1e-12);
  }
  CHECK(l == l.transpose());
  CHECK_THROWS_AS(laplacian(Matrix(2, 2, {0, 1, 0, 0})), std::invalid_argument);
}

TEST_CASE("gft_basis: known spectra and reconstruction") {
  const auto path = gft_basis(laplacian(Matrix(2, 2, {0, 1, 1, 0})));
  CHECK(std::abs(path.eigenvalues[0]) <= 1e-12);
  CHECK(path.eigenvalues[1] == doctest::Approx(2.0));

  const auto k3 = gft_basis(laplacian(Matrix(3, 3, {0, 1, 1, 1, 0, 1, 1, 1, 0})));
  CHECK(std::abs(k3.eigenvalues[0]) <= 1e-12);
  CHECK(k3.eigenvalues[1] == doctest::Approx(3.0));
  CHECK(k3.eigenvalues[2] == doctest::Approx(3.0));

  for (int t = 0; t < 3; ++t) {
    const Matrix l = laplacian(random_graph(12, SeededRng(10 + t)));
    const auto b = gft_basis(l);
    Matrix lam(12, 12);
    for (std::size_t i = 0; i < 12; ++i) lam(i, i) = b.eigenvalues[i];
    const Matrix rec = testing::naive_mul(testing::naive_mul(b.basis, lam), b.basis.transpose());
    CHECK((rec - l).frobenius() / l.frobenius() <= 1e-8);
    CHECK(b.eigenvalues.front() >= -1e-10);  // PSD for nonnegative weights
  }
}

TEST_CASE("spectral_coeffs: identity basis, zero rows, norm preservation") {
  const Matrix f = testing::random_matrix(3, 5, SeededRng(1));
  const SpectralBasis id{Matrix(5, 5), Matrix::identity(5), Vector(5, 0.0)};
  CHECK(spectral_coeffs(f, id) == f);

  Matrix fz = f;
  for (std::size_t j = 0; j < 5; ++j) fz(1, j) = 0.0;
  const auto b = gft_basis(laplacian(random_graph(5, SeededRng(2))));
  const Matrix s = spectral_coeffs(fz, b);
  for (std::size_t j = 0; j < 5; ++j) CHECK(s(1, j) == 0.0);
  CHECK(std::abs(spectral_coeffs(f, b).frobenius() - f.frobenius()) <= 1e-9);
  CHECK_THROWS_AS(spectral_coeffs(Matrix(3, 4), b), std::invalid_argument);
}

TEST_CASE("reconstruct_features: round trip and identity target") {
  const Matrix f = testing::random_matrix(4, 7, SeededRng(3));
  const auto b = gft_basis(laplacian(random_graph(7, SeededRng(4))));
  const Matrix s = spectral_coeffs(f, b);
  CHECK((reconstruct_features(s, b) - f).frobenius() <= 1e-10);
  const SpectralBasis id{Matrix(7, 7), Matrix::identity(7), Vector(7, 0.0)};
  CHECK(reconstruct_features(s, id) == s);
}

TEST_CASE("reconstruct_features: error grows with the graph perturbation") {
  const Matrix a = random_graph(10, SeededRng(5));
  const Matrix f = testing::random_matrix(4, 10, SeededRng(6));
  const auto b = gft_basis(laplacian(a));
  const Matrix s = spectral_coeffs(f, b);
  const Matrix noise = random_graph(10, SeededRng(7));
  double last = -1.0;
  for (double eps : {1e-6, 1e-4, 1e-2}) {
    const Matrix perturbed = a + eps * noise;
    const double err = (reconstruct_features(s, gft_basis(laplacian(perturbed))) - f).frobenius();
    CHECK(err > last);
    last = err;
  }
  CHECK(last < f.frobenius());
}

TEST_CASE("initial_malicious: cycle, random, nearest-global") {
  const Matrix fh = testing::random_matrix(3, 6, SeededRng(8));
  CHECK(initial_malicious(fh, RowPolicy::kCycle, 0, SeededRng(1)).row == 0);
  CHECK(initial_malicious(fh, RowPolicy::kCycle, 4, SeededRng(1)).row == 1);
  const auto r1 = initial_malicious(fh, RowPolicy::kRandom, 0, SeededRng(2));
  const auto r2 = initial_malicious(fh, RowPolicy::kRandom, 0, SeededRng(2));
  CHECK(r1.row == r2.row);
  CHECK(r1.values == Vector(fh.row(r1.row).begin(), fh.row(r1.row).end()));

  const Vector target = testing::random_vector(6, SeededRng(9));
  std::size_t best = 0;
  for (std::size_t r = 1; r < 3; ++r)
    if (cosine(fh.row(r), target) > cosine(fh.row(best), target)) best = r;
  CHECK(initial_malicious(fh, RowPolicy::kNearestGlobal, 0, SeededRng(1), target).row == best);
  CHECK_THROWS_AS(initial_malicious(fh, RowPolicy::kNearestGlobal, 0, SeededRng(1)), std::invalid_argument);
  CHECK(parse_row_policy(to_string(RowPolicy::kNearestGlobal)) == RowPolicy::kNearestGlobal);
}

TEST_CASE("scatter_selected fills the rest") {
  CHECK(scatter_selected(Vector{7, 8}, {1, 3}, Vector{0, 0, 0, 0}) == Vector{0, 7, 0, 8});
  CHECK_THROWS_AS(scatter_selected(Vector{7}, {1, 3}, Vector(4)), std::invalid_argument);
}
