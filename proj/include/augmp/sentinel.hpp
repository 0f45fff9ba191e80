#pragma once

// Server-side screening before aggregation: a Euclidean distance filter
// against the last realized global update and a cosine-similarity score
// filter over the submitted batch. An update is flagged iff its metric is
// strictly above the threshold.

#include <string>
#include <string_view>
#include <vector>

#include "augmp/fedsim.hpp"

namespace augmp {

enum class FilterKind { kDistance, kSimilarity };
enum class ScorePolicy { kMean, kMax };

ScorePolicy parse_score_policy(std::string_view name);
std::string_view to_string(ScorePolicy policy);
std::string_view to_string(FilterKind kind);

struct AgentVerdict {
  int agent_id = 0;
  double metric = 0.0;
  double threshold = 0.0;
  bool flagged = false;
};

struct DefenseVerdict {
  FilterKind kind = FilterKind::kDistance;
  int round = 0;
  std::vector<AgentVerdict> agents;  // submission order
  bool fallback = false;             // every update flagged, all kept
  std::string alarm;
};

struct FilterResult {
  std::vector<UpdateVector> kept;
  DefenseVerdict verdict;
};

FilterResult distance_filter(const std::vector<UpdateVector>& updates, std::span<const double> reference,
                             double threshold, int round = 0);

/// score_j over i != j of cos(u_i, u_j); a lone update scores 0.
std::vector<double> similarity_scores(const std::vector<UpdateVector>& updates, ScorePolicy policy);

FilterResult similarity_filter(const std::vector<UpdateVector>& updates, double threshold,
                               ScorePolicy policy = ScorePolicy::kMean, int round = 0);

}  // namespace augmp
