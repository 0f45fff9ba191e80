#pragma once

// Experiment configuration. The on-disk format is a keyed text file with
// [section] headers and `key = value` lines; `section.key=value` overrides
// are applied on top in order.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace augmp {

struct ExperimentConfig {
  // [run]
  std::uint64_t seed = 1;
  int agents = 5;
  int adversaries = 2;
  int rounds = 50;
  double server_lr = 1.0;
  std::string attack = "none";   // none | augmp | alie | rmp
  std::string defense = "none";  // none | distance | similarity | both
  bool debug = false;

  // [data]
  int classes = 4;
  int input_dim = 20;
  int train_per_class = 500;
  int test_per_class = 250;
  int adversary_per_class = 25;
  double separation = 4.5;
  double dirichlet_beta = 0.3;
  double adversary_holdout = 0.2;

  // [model]
  int layers = 1;
  int hidden_dim = 16;
  int lora_rank = 2;
  double lora_alpha = 4.0;
  double lora_dropout = 0.0;
  std::string lora_scaling = "alpha_over_r";  // alpha_over_r | none

  // [train]
  int local_epochs = 5;
  double local_lr = 0.01;

  // [attack]
  double visibility = 1.0;
  int selected_count = 128;
  std::string selection = "variance-top";
  std::string row_policy = "random";
  std::string penalty_form = "signed";
  std::string similarity_aggregate = "max";
  std::string distance_reference = "both";
  double temperature = 50.0;
  int inner_steps = 50;
  double inner_step_size = 0.3;
  double inner_clip = 10.0;
  bool relative_step = true;
  bool normalize_distance = true;
  double objective_weight = 0.1;
  double rho_lambda = 3.0;
  double rho_theta = 3.0;
  double dual_step = 0.05;
  bool adaptive_rho = false;
  double stealth_margin = 0.1;
  bool grl_off = false;
  bool al_penalty_off = false;

  // [thresholds]
  double kappa = 0.0;
  double percentile = 95.0;
  double initial_distance = 1e-3;   // round 1, before any benign statistics
  double initial_similarity = 1.0;

  // [vgae]
  int vgae_hidden = 64;
  int vgae_latent = 32;
  int vgae_epochs = 30;
  double vgae_lr = 0.01;
  bool vgae_featureless = false;
  bool vgae_decode_from_mean = true;

  // [baselines]
  double alie_z = 1.0;
  std::string alie_z_policy = "fixed";
  std::string alie_sign = "against-mean";
  double rmp_scale = 1.0;

  // [defense]
  std::string score_policy = "max";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const ExperimentConfig& config);

/// Every field, in a fixed order, as "section.key".
std::vector<std::string> config_keys();

std::string serialize(const ExperimentConfig& config);
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// `key` is "section.key" or the bare key when unambiguous.
void set_field(ExperimentConfig& config, std::string_view key, std::string_view value);
void apply_override(ExperimentConfig& config, std::string_view assignment);  // "key=value"
std::string get_field(const ExperimentConfig& config, std::string_view key);

nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace augmp
