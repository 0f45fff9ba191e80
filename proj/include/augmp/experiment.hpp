#pragma once

// The round loop: benign local training, adversary synthesis, optional
// screening, aggregation, broadcast and evaluation, with one metrics row
// per round and a JSON summary per run.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "augmp/config.hpp"
#include "augmp/manipulator.hpp"

namespace augmp {

struct AgentRecord {
  int agent_id = 0;
  bool malicious = false;
  double distance = 0.0;  // to the previous realized global update
  double score = 0.0;     // sentinel similarity score
  bool flagged_distance = false;
  bool flagged_similarity = false;
  bool kept = true;
};

struct AdversaryRecord {
  int agent_id = 0;
  double lambda = 0.0;
  double theta = 0.0;
  double distance = 0.0;    // attacker-side, to its predicted global update
  double similarity = 0.0;  // attacker-side hard aggregate
  bool stealth_ok = true;   // sentinel-side check against the broadcast thresholds
  std::string failure;
};

struct RoundRecord {
  int round = 0;
  double global_accuracy = 0.0;
  double global_loss = 0.0;
  double local_accuracy = 0.0;  // mean over benign agents
  Thresholds thresholds;
  std::vector<AgentRecord> agents;  // submission order: benign by id, then adversaries
  std::vector<AdversaryRecord> adversaries;
  double pair_similarity_min = 0.0;
  double pair_similarity_mean = 0.0;
  double pair_similarity_max = 0.0;
  std::size_t kept = 0;
  bool defense_fallback = false;
  double prediction_gap = 0.0;  // mean ||predicted - realized|| over AugMP adversaries
};

struct RunResult {
  std::vector<RoundRecord> rounds;
  nlohmann::json summary;
};

/// Fixed CSV header, identical for every attack and defense kind.
const std::vector<std::string>& metrics_header();
std::string metrics_row(const RoundRecord& record);
/// 9 significant digits, locale independent; non-finite values as nan/inf/-inf.
std::string format_metric(double value);

/// Runs the experiment. When `out_dir` is set, writes metrics.csv,
/// summary.json and (with config.debug) debug/round_NNN.json there.
RunResult run_experiment(const ExperimentConfig& config, const std::optional<std::string>& out_dir = {});

/// Canonical config key for a sweep axis; throws for unsweepable fields.
std::string sweep_key(const std::string& axis);

/// One run per value under out_dir/run_NNN, plus out_dir/index.json.
nlohmann::json run_sweep(const ExperimentConfig& base, const std::string& axis,
                         const std::vector<std::string>& values, const std::string& out_dir);

}  // namespace augmp
