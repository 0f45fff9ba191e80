#pragma once

// Constrained malicious-update synthesis. An adversary observes benign
// updates, builds an initial update through the graph pipeline
// (correlation graph -> VGAE -> spectral transform), then refines it by
// gradient ascent on an augmented Lagrangian whose constraints bound the
// update's distance to the predicted global update and its cosine
// similarity to benign updates. Multipliers take one projected step per
// communication round.

#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "augmp/fedsim.hpp"
#include "augmp/graphcraft.hpp"
#include "augmp/gst.hpp"
#include "augmp/vgae.hpp"

namespace augmp {

/// Infinite values mean the constraint is inactive (no statistics yet).
struct Thresholds {
  double distance = std::numeric_limits<double>::infinity();
  double similarity = std::numeric_limits<double>::infinity();
};

/// Nearest-rank percentile, q in [0, 100].
double nearest_rank_percentile(std::vector<double> values, double q);

/// distance = (1 + kappa) * max_i ||benign_i - global_delta||,
/// similarity = q-th percentile of pairwise benign cosines.
Thresholds estimate_thresholds(const std::vector<Vector>& benign, std::span<const double> global_delta,
                               double kappa, double percentile);

struct DualState {
  double lambda = 0.0;
  double theta = 0.0;
  double rho_lambda = 1.0;
  double rho_theta = 1.0;
  double step = 0.05;
  Thresholds thresholds;
  int round = 0;
  double last_distance_violation = -std::numeric_limits<double>::infinity();
  double last_similarity_violation = -std::numeric_limits<double>::infinity();
};

struct DualUpdateOptions {
  bool adaptive_rho = false;
  double rho_growth = 1.5;
  double rho_max = 1e3;
  bool normalize_distance = false;  // violation measured as d / d_T - 1
};

/// lambda' = [lambda + step (d - d_T)]+, theta' = [theta + step (sim - delta_T)]+.
/// Inactive constraints leave their multiplier unchanged.
DualState dual_update(const DualState& dual, double distance, double similarity,
                      const DualUpdateOptions& options = {});

struct ObjectiveValue {
  double value = 0.0;
  Vector gradient;  // with respect to the global parameters
};

/// The adversary's stand-in for the server-side test loss.
class SurrogateObjective {
 public:
  virtual ~SurrogateObjective() = default;
  virtual ObjectiveValue evaluate(std::span<const double> global_params) const = 0;
};

/// Mean cross-entropy of backbone + global adapter on adversary-held data.
class HeldoutLoss final : public SurrogateObjective {
 public:
  HeldoutLoss(const Backbone& backbone, Dataset heldout);
  ObjectiveValue evaluate(std::span<const double> global_params) const override;
  const Dataset& data() const { return heldout_; }

 private:
  const Backbone& backbone_;
  Dataset heldout_;
};

/// F(w) = -1/2 sum_k curvature_k (w_k - center_k)^2; concave, for tests and
/// the verify suite.
class QuadraticObjective final : public SurrogateObjective {
 public:
  QuadraticObjective(Vector center, Vector curvature);
  ObjectiveValue evaluate(std::span<const double> global_params) const override;

 private:
  Vector center_;
  Vector curvature_;
};

/// Weighted mean over the observed benign updates and the adversary's own iterate.
Vector predict_global(const std::vector<Vector>& observed, const std::vector<double>& weights,
                      std::span<const double> own, double own_weight);

enum class PenaltyForm { kSigned, kHinge };
/// Which global update the distance constraint is measured against: the
/// predicted aggregate of this round, the last realized one (what the server
/// screens against), or the larger of the two.
enum class DistanceReference { kPredicted, kPrevious, kBoth };
enum class SimilarityAggregate { kMax, kMean };

PenaltyForm parse_penalty_form(std::string_view name);
std::string_view to_string(PenaltyForm form);
DistanceReference parse_distance_reference(std::string_view name);
std::string_view to_string(DistanceReference ref);
SimilarityAggregate parse_similarity_aggregate(std::string_view name);
std::string_view to_string(SimilarityAggregate agg);

struct AttackProblem {
  std::vector<Vector> observed;
  std::vector<double> observed_weights;
  double own_weight = 1.0;
  Vector global_params;  // w_g(t-1)
  double server_lr = 1.0;
  const SurrogateObjective* objective = nullptr;
  std::vector<std::size_t> free_coords;  // empty: every coordinate may move
  Vector previous_global;  // last realized global update; needed unless the reference is kPredicted
};

struct LagrangianOptions {
  PenaltyForm form = PenaltyForm::kSigned;
  SimilarityAggregate aggregate = SimilarityAggregate::kMax;
  DistanceReference reference = DistanceReference::kPredicted;
  double temperature = 50.0;  // log-sum-exp sharpness for the max aggregate
  bool normalize_distance = false;  // distance term uses (d - d_T) / d_T
  double objective_scale = 1.0;     // F enters as objective_scale * F
  bool constraints_enabled = true;  // false: the objective alone
};

struct LagrangianValue {
  double value = 0.0;
  Vector gradient;
  double objective = 0.0;
  double distance = 0.0;          // per the configured reference
  double distance_predicted = 0.0;
  double distance_previous = 0.0;  // 0 when no previous global was supplied
  double similarity = 0.0;        // aggregate used inside the Lagrangian (smooth for kMax)
  double similarity_hard = 0.0;   // plain max or mean
  Vector predicted_global;
};

/// F(w'_g) - lambda (d - d_T) - theta (sim - delta_T) - rho_l/2 pen(d - d_T) - rho_t/2 pen(sim - delta_T)
/// with its gradient with respect to the malicious update.
LagrangianValue augmented_lagrangian(std::span<const double> update, const DualState& dual,
                                     const AttackProblem& problem, const LagrangianOptions& options);

struct InnerOptions {
  int steps = 50;
  double step_size = 0.1;
  double clip = 10.0;
  double step_scale = 1.0;  // ascent runs in coordinates m / step_scale (clip applies there)
};

struct InnerResult {
  Vector best;
  double best_value = 0.0;
  double initial_value = 0.0;
  std::vector<double> trace;
  bool rolled_back = false;
};

/// Clipped gradient ascent from `init`; returns the best iterate seen.
InnerResult inner_maximize(std::span<const double> init, const DualState& dual,
                           const AttackProblem& problem, const LagrangianOptions& lagrangian,
                           const InnerOptions& inner);

struct StealthReport {
  double distance = 0.0;  // constrained distance (per reference)
  double distance_predicted = 0.0;
  double similarity = 0.0;
  Thresholds thresholds;
  bool distance_ok = true;
  bool similarity_ok = true;
};

struct AugmpOptions {
  double visibility = 1.0;
  std::size_t selected_count = 128;  // clamped to the update dimension
  SelectionPolicy selection = SelectionPolicy::kVarianceTop;
  VgaeOptions vgae;
  RowPolicy row_policy = RowPolicy::kRandom;
  LagrangianOptions lagrangian;
  InnerOptions inner;
  DualUpdateOptions dual_schedule;
  double rho_lambda = 1.0;
  double rho_theta = 1.0;
  double dual_step = 0.05;
  double stealth_margin = 0.0;  // shrink the broadcast thresholds by this fraction
  bool threshold_relative_step = false;  // inner ascent in coordinates scaled by the distance threshold
  double objective_weight = 0.0;  // > 0: cap on the objective's ascent-coordinate gradient norm at the initial point
  bool grl_off = false;         // initialize from the benign mean
  bool al_penalty_off = false;  // maximize the objective alone, multipliers frozen at 0
};

struct AdversaryRoundInput {
  int round = 0;
  const std::vector<UpdateVector>* benign = nullptr;  // this round's benign submissions
  Vector global_params;                                // w_g(t-1)
  Vector previous_global_delta;                        // last realized global update
  double server_lr = 1.0;
  Thresholds thresholds;  // broadcast by the server
};

struct AdversaryRoundOutput {
  UpdateVector update;
  StealthReport report;
  DualState dual_used;
  DualState dual_next;
  std::vector<double> lagrangian_trace;
  std::vector<double> elbo_trace;
  Vector predicted_global;
  std::size_t observed_count = 0;
  std::string failure;  // "stage: message" when the adversary fell back to the benign mean
};

class AugmpAdversary {
 public:
  AugmpAdversary(int agent_id, std::size_t index, AugmpOptions options,
                 std::unique_ptr<SurrogateObjective> objective, SeededRng rng);

  AdversaryRoundOutput run_round(const AdversaryRoundInput& input);

  int agent_id() const { return agent_id_; }
  const DualState& dual() const { return dual_; }
  const AugmpOptions& options() const { return options_; }

 private:
  int agent_id_;
  std::size_t index_;
  AugmpOptions options_;
  std::unique_ptr<SurrogateObjective> objective_;
  SeededRng rng_;
  DualState dual_;
};

std::vector<AdversaryRoundOutput> run_augmp_round(std::vector<AugmpAdversary>& adversaries,
                                                  const AdversaryRoundInput& input);

/// Median of claimed sizes (lower median for even counts).
std::int64_t median_claimed_size(const std::vector<UpdateVector>& updates);
Vector coordinate_mean(const std::vector<UpdateVector>& updates);

}  // namespace augmp
