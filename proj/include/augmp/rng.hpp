#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace augmp {

/// Counter-based random stream.
///
/// Draw k of a stream is a pure function of (key, k), and `split` derives a
/// child key from the parent key and a label only, so child streams do not
/// depend on how many draws the parent or its siblings have made.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  SeededRng split(std::string_view label) const;
  SeededRng split(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal (Box-Muller; one draw per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Gamma(shape, 1). Marsaglia-Tsang, with the shape < 1 boost.
  double gamma(double shape);
  /// Uniform on {0, ..., n-1}; n must be positive.
  std::size_t uniform_index(std::size_t n);

  std::uint64_t key() const { return key_; }

 private:
  SeededRng(std::uint64_t key, bool) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace augmp
