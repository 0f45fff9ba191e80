#include <doctest.h>

#include <cmath>
#include <vector>

#include "augmp/rng.hpp"

using augmp::SeededRng;

namespace {
std::vector<std::uint64_t> draws(SeededRng rng, int n) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(rng.next_u64());
  return out;
}
}  // namespace

TEST_CASE("rng: same seed and label reproduce") {
  CHECK(draws(SeededRng(7).split("agent-0"), 100) == draws(SeededRng(7).split("agent-0"), 100));
}

TEST_CASE("rng: labels and seeds separate streams") {
  CHECK(draws(SeededRng(7).split("agent-0"), 100) != draws(SeededRng(7).split("agent-1"), 100));
  CHECK(draws(SeededRng(7).split("x"), 100) != draws(SeededRng(8).split("x"), 100));
  CHECK(draws(SeededRng(7).split("x", 0), 20) != draws(SeededRng(7).split("x", 1), 20));
}

TEST_CASE("rng: children do not depend on parent consumption") {
  SeededRng a(42);
  SeededRng b(42);
  for (int i = 0; i < 17; ++i) b.next_u64();
  CHECK(draws(a.split("child"), 10) == draws(b.split("child"), 10));
}

TEST_CASE("rng: distribution moments") {
  SeededRng rng(1);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    sg += rng.gamma(0.3);
  }
  CHECK(std::abs(su / n - 0.5) < 0.005);
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(std::abs(sn2 / n - 1.0) < 0.02);
  CHECK(std::abs(sg / n - 0.3) < 0.01);  // Gamma(k, 1) has mean k
}

TEST_CASE("rng: uniform_index covers the range") {
  SeededRng rng(2);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) ++hits.at(rng.uniform_index(5));
  for (int h : hits) CHECK(h > 800);
}
