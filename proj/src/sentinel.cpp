#include "augmp/sentinel.hpp"

#include <algorithm>
#include <stdexcept>

namespace augmp {

ScorePolicy parse_score_policy(std::string_view name) {
  if (name == "mean") return ScorePolicy::kMean;
  if (name == "max") return ScorePolicy::kMax;
  throw std::invalid_argument("unknown score policy '" + std::string(name) + "'");
}

std::string_view to_string(ScorePolicy policy) { return policy == ScorePolicy::kMax ? "max" : "mean"; }

std::string_view to_string(FilterKind kind) {
  return kind == FilterKind::kSimilarity ? "similarity" : "distance";
}

namespace {

FilterResult finish(const std::vector<UpdateVector>& updates, DefenseVerdict verdict) {
  FilterResult out;
  for (std::size_t j = 0; j < updates.size(); ++j)
    if (!verdict.agents[j].flagged) out.kept.push_back(updates[j]);
  if (out.kept.empty() && !updates.empty()) {
    out.kept = updates;
    verdict.fallback = true;
    verdict.alarm = std::string(to_string(verdict.kind)) + " filter flagged every update; keeping all";
  }
  out.verdict = std::move(verdict);
  return out;
}

}  // namespace

FilterResult distance_filter(const std::vector<UpdateVector>& updates, std::span<const double> reference,
                             double threshold, int round) {
  DefenseVerdict v;
  v.kind = FilterKind::kDistance;
  v.round = round;
  for (const auto& u : updates) {
    if (u.values.size() != reference.size())
      throw std::invalid_argument("distance_filter: update length does not match the reference");
    const double d = euclid(u.values, reference);
    v.agents.push_back({u.agent_id, d, threshold, d > threshold});
  }
  return finish(updates, std::move(v));
}

std::vector<double> similarity_scores(const std::vector<UpdateVector>& updates, ScorePolicy policy) {
  const std::size_t n = updates.size();
  std::vector<double> scores(n, 0.0);
  if (n < 2) return scores;
  Matrix sims(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sims(i, j) = sims(j, i) = cosine(updates[i].values, updates[j].values);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = policy == ScorePolicy::kMax ? -1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      acc = policy == ScorePolicy::kMax ? std::max(acc, sims(i, j)) : acc + sims(i, j);
    }
    scores[j] = policy == ScorePolicy::kMax ? acc : acc / static_cast<double>(n - 1);
  }
  return scores;
}

FilterResult similarity_filter(const std::vector<UpdateVector>& updates, double threshold,
                               ScorePolicy policy, int round) {
  DefenseVerdict v;
  v.kind = FilterKind::kSimilarity;
  v.round = round;
  const auto scores = similarity_scores(updates, policy);
  for (std::size_t j = 0; j < updates.size(); ++j) {
    const bool flagged = updates.size() >= 2 && scores[j] > threshold;
    v.agents.push_back({updates[j].agent_id, scores[j], threshold, flagged});
  }
  if (updates.size() == 1) v.alarm = "similarity filter: single update, score undefined; kept";
  return finish(updates, std::move(v));
}

}  // namespace augmp
