#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "augmp/baselines.hpp"
#include "helpers.hpp"

using namespace augmp;

namespace {
BenignStats stats_of(std::size_t dim, int n, SeededRng rng) {
  std::vector<UpdateVector> ups;
  for (int i = 0; i < n; ++i) ups.push_back(testing::make_update(i, testing::random_vector(dim, rng.split("u", i))));
  return benign_stats(ups);
}
}  // namespace

TEST_CASE("benign_stats: population convention") {
  const auto s = benign_stats({testing::make_update(0, {1.0, 4.0}), testing::make_update(1, {3.0, 4.0})});
  CHECK(s.mean == Vector{2.0, 4.0});
  CHECK(s.stddev == Vector{1.0, 0.0});
  CHECK(s.count == 2);
  CHECK_THROWS_AS(benign_stats({testing::make_update(0, {1.0})}), std::invalid_argument);
}

TEST_CASE("alie: z = 0 and zero spread return the mean") {
  const auto s = stats_of(8, 5, SeededRng(1));
  CHECK(alie_update(s, 0.0) == s.mean);
  BenignStats flat = s;
  flat.stddev.assign(8, 0.0);
  CHECK(alie_update(flat, 2.5) == s.mean);
}

TEST_CASE("alie: stays inside the z-box and moves against the mean") {
  const auto s = stats_of(50, 5, SeededRng(2));
  const double z = 1.5;
  const Vector u = alie_update(s, z);
  for (std::size_t k = 0; k < 50; ++k) {
    CHECK(u[k] >= s.mean[k] - z * s.stddev[k] - 1e-15);
    CHECK(u[k] <= s.mean[k] + z * s.stddev[k] + 1e-15);
    CHECK(std::abs(u[k]) <= std::abs(s.mean[k]) + z * s.stddev[k] + 1e-15);
  }
  const Vector w = alie_update(s, z, SignPolicy::kWithMean);
  for (std::size_t k = 0; k < 50; ++k)
    if (s.mean[k] != 0.0) CHECK(std::abs(w[k]) >= std::abs(s.mean[k]));
}

TEST_CASE("alie quantile z from the agent counts") {
  // n = 7, m = 2: s = floor(4.5) - 2 = 2, p = (7 - 2 - 2) / 5 = 0.6.
  CHECK(alie_quantile_z(7, 2) == doctest::Approx(0.2533471031).epsilon(1e-8));
  CHECK(alie_quantile_z(3, 1) == 0.0);
}

TEST_CASE("rmp: degenerate scale, determinism, Monte Carlo variance") {
  const auto s = stats_of(6, 5, SeededRng(3));
  const Vector tiny = rmp_update(s, 1e-12, SeededRng(1));
  CHECK(testing::max_abs_diff(tiny, s.mean) <= 1e-10);
  CHECK(rmp_update(s, 3.0, SeededRng(4)) == rmp_update(s, 3.0, SeededRng(4)));

  const double c = 3.0;
  const int draws = 10000;
  Vector sum(6, 0.0), sum2(6, 0.0);
  for (int i = 0; i < draws; ++i) {
    const Vector u = rmp_update(s, c, SeededRng(5).split("draw", i));
    for (std::size_t k = 0; k < 6; ++k) {
      sum[k] += u[k];
      sum2[k] += u[k] * u[k];
    }
  }
  for (std::size_t k = 0; k < 6; ++k) {
    const double mean = sum[k] / draws;
    const double var = sum2[k] / draws - mean * mean;
    const double expect = (c * s.stddev[k]) * (c * s.stddev[k]);
    CHECK(std::abs(var - expect) <= 0.05 * expect);
  }
}

TEST_CASE("baseline policy names round trip") {
  CHECK(parse_z_policy(to_string(ZPolicy::kQuantile)) == ZPolicy::kQuantile);
  CHECK(parse_sign_policy(to_string(SignPolicy::kWithMean)) == SignPolicy::kWithMean);
  CHECK_THROWS_AS(parse_z_policy("bogus"), std::invalid_argument);
}
