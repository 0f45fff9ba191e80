#include "augmp/baselines.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <stdexcept>
#include <string>

namespace augmp {

BenignStats benign_stats(const std::vector<UpdateVector>& observed) {
  if (observed.size() < 2) throw std::invalid_argument("benign_stats: need at least 2 updates");
  const std::size_t dim = observed.front().values.size();
  BenignStats s;
  s.count = observed.size();
  s.mean.assign(dim, 0.0);
  s.stddev.assign(dim, 0.0);
  for (const auto& u : observed) {
    if (u.values.size() != dim) throw std::invalid_argument("benign_stats: length mismatch");
    for (std::size_t k = 0; k < dim; ++k) s.mean[k] += u.values[k];
  }
  const double n = static_cast<double>(s.count);
  for (double& m : s.mean) m /= n;
  for (const auto& u : observed)
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = u.values[k] - s.mean[k];
      s.stddev[k] += d * d;
    }
  for (double& v : s.stddev) v = std::sqrt(v / n);
  return s;
}

ZPolicy parse_z_policy(std::string_view name) {
  if (name == "fixed") return ZPolicy::kFixed;
  if (name == "quantile") return ZPolicy::kQuantile;
  throw std::invalid_argument("unknown z policy '" + std::string(name) + "'");
}

std::string_view to_string(ZPolicy policy) { return policy == ZPolicy::kQuantile ? "quantile" : "fixed"; }

SignPolicy parse_sign_policy(std::string_view name) {
  if (name == "against-mean") return SignPolicy::kAgainstMean;
  if (name == "with-mean") return SignPolicy::kWithMean;
  throw std::invalid_argument("unknown sign policy '" + std::string(name) + "'");
}

std::string_view to_string(SignPolicy policy) {
  return policy == SignPolicy::kWithMean ? "with-mean" : "against-mean";
}

double alie_quantile_z(std::size_t n, std::size_t m) {
  if (m >= n) throw std::invalid_argument("alie_quantile_z: need more agents than adversaries");
  const double s = std::floor(static_cast<double>(n) / 2.0 + 1.0) - static_cast<double>(m);
  const double p = (static_cast<double>(n - m) - s) / static_cast<double>(n - m);
  if (p <= 0.5) return 0.0;
  if (p >= 1.0) throw std::invalid_argument("alie_quantile_z: quantile level reaches 1");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Vector alie_update(const BenignStats& stats, double z, SignPolicy sign) {
  if (stats.count < 2) throw std::invalid_argument("alie_update: need at least 2 benign updates");
  if (!(z >= 0.0)) throw std::invalid_argument("alie_update: z must be >= 0");
  const double dir = sign == SignPolicy::kAgainstMean ? -1.0 : 1.0;
  Vector out(stats.mean.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double m = stats.mean[k];
    const double s = m > 0.0 ? 1.0 : (m < 0.0 ? -1.0 : 0.0);
    out[k] = m + dir * s * z * stats.stddev[k];
  }
  return out;
}

Vector rmp_update(const BenignStats& stats, double scale, SeededRng rng) {
  if (stats.count < 2) throw std::invalid_argument("rmp_update: need at least 2 benign updates");
  if (!(scale > 0.0)) throw std::invalid_argument("rmp_update: scale must be > 0");
  Vector out(stats.mean.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = stats.mean[k] + scale * stats.stddev[k] * rng.normal();
  return out;
}

}  // namespace augmp
