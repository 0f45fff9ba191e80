#pragma once

// Reference attacks built from coordinatewise statistics of the observed
// benign updates: a bounded mean shift (ALIE) and Gaussian sampling (RMP).

#include <string_view>
#include <vector>

#include "augmp/fedsim.hpp"

namespace augmp {

struct BenignStats {
  Vector mean;
  Vector stddev;  // population convention
  std::size_t count = 0;
};

/// Needs at least 2 updates of equal length.
BenignStats benign_stats(const std::vector<UpdateVector>& observed);

enum class ZPolicy { kFixed, kQuantile };
enum class SignPolicy { kAgainstMean, kWithMean };

ZPolicy parse_z_policy(std::string_view name);
std::string_view to_string(ZPolicy policy);
SignPolicy parse_sign_policy(std::string_view name);
std::string_view to_string(SignPolicy policy);

/// z = Phi^-1((n - m - s) / (n - m)), s = floor(n/2 + 1) - m, with n agents
/// in total and m of them malicious. Clamped at 0 when the ratio is <= 0.5.
double alie_quantile_z(std::size_t n, std::size_t m);

/// mean - sign(mean) * z * stddev (kAgainstMean) or mean + sign(mean) * z * stddev.
Vector alie_update(const BenignStats& stats, double z, SignPolicy sign = SignPolicy::kAgainstMean);

/// mean + c * stddev * xi, xi ~ N(0, I).
Vector rmp_update(const BenignStats& stats, double scale, SeededRng rng);

}  // namespace augmp
