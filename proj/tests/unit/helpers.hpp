#pragma once

#include <cmath>
#include <vector>

#include "augmp/fedsim.hpp"
#include "augmp/mathcore.hpp"
#include "augmp/rng.hpp"

namespace testing {

inline augmp::Matrix random_matrix(std::size_t r, std::size_t c, augmp::SeededRng rng, double sd = 1.0) {
  augmp::Matrix m(r, c);
  for (double& x : m.data()) x = rng.normal(0.0, sd);
  return m;
}

inline augmp::Matrix random_symmetric(std::size_t n, augmp::SeededRng rng) {
  augmp::Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = rng.normal();
  return m;
}

inline augmp::Vector random_vector(std::size_t n, augmp::SeededRng rng, double sd = 1.0) {
  augmp::Vector v(n);
  for (double& x : v) x = rng.normal(0.0, sd);
  return v;
}

// Naive triple loop, kept separate from the library's matmul.
inline augmp::Matrix naive_mul(const augmp::Matrix& a, const augmp::Matrix& b) {
  augmp::Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      out(i, j) = static_cast<double>(s);
    }
  return out;
}

inline double max_abs_diff(const augmp::Matrix& a, const augmp::Matrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

inline double max_abs_diff(const augmp::Vector& a, const augmp::Vector& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline augmp::UpdateVector make_update(int id, augmp::Vector values, std::int64_t size = 1) {
  augmp::UpdateVector u;
  u.agent_id = id;
  u.values = std::move(values);
  u.claimed_size = size;
  return u;
}

}  // namespace testing
