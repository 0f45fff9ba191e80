#include "augmp/manipulator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace augmp {

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile: q must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

Thresholds estimate_thresholds(const std::vector<Vector>& benign, std::span<const double> global_delta,
                               double kappa, double percentile) {
  if (benign.size() < 2)
    throw std::invalid_argument("estimate_thresholds: need at least 2 benign updates");
  double max_distance = 0.0;
  for (const auto& b : benign) max_distance = std::max(max_distance, euclid(b, global_delta));
  std::vector<double> sims;
  for (std::size_t i = 0; i < benign.size(); ++i)
    for (std::size_t j = i + 1; j < benign.size(); ++j) sims.push_back(cosine(benign[i], benign[j]));
  return {(1.0 + kappa) * max_distance, nearest_rank_percentile(std::move(sims), percentile)};
}

DualState dual_update(const DualState& dual, double distance, double similarity,
                      const DualUpdateOptions& options) {
  DualState next = dual;
  if (std::isfinite(dual.thresholds.distance)) {
    double violation = distance - dual.thresholds.distance;
    if (options.normalize_distance && dual.thresholds.distance > 0.0) violation /= dual.thresholds.distance;
    next.lambda = std::max(0.0, dual.lambda + dual.step * violation);
    if (options.adaptive_rho && violation > 0.0 && violation > dual.last_distance_violation)
      next.rho_lambda = std::min(dual.rho_lambda * options.rho_growth, options.rho_max);
    next.last_distance_violation = violation;
  }
  if (std::isfinite(dual.thresholds.similarity)) {
    const double violation = similarity - dual.thresholds.similarity;
    next.theta = std::max(0.0, dual.theta + dual.step * violation);
    if (options.adaptive_rho && violation > 0.0 && violation > dual.last_similarity_violation)
      next.rho_theta = std::min(dual.rho_theta * options.rho_growth, options.rho_max);
    next.last_similarity_violation = violation;
  }
  return next;
}

HeldoutLoss::HeldoutLoss(const Backbone& backbone, Dataset heldout)
    : backbone_(backbone), heldout_(std::move(heldout)) {
  if (heldout_.size() == 0) throw std::invalid_argument("HeldoutLoss: empty dataset");
}

ObjectiveValue HeldoutLoss::evaluate(std::span<const double> global_params) const {
  const LossResult r = softmax_xent(backbone_.effective(global_params), heldout_, true);
  return {r.loss, flatten(r.grad)};
}

QuadraticObjective::QuadraticObjective(Vector center, Vector curvature)
    : center_(std::move(center)), curvature_(std::move(curvature)) {
  if (center_.size() != curvature_.size()) throw std::invalid_argument("QuadraticObjective: length mismatch");
}

ObjectiveValue QuadraticObjective::evaluate(std::span<const double> global_params) const {
  if (global_params.size() != center_.size()) throw std::invalid_argument("QuadraticObjective: length mismatch");
  ObjectiveValue out;
  out.gradient.resize(center_.size());
  for (std::size_t k = 0; k < center_.size(); ++k) {
    const double d = global_params[k] - center_[k];
    out.value -= 0.5 * curvature_[k] * d * d;
    out.gradient[k] = -curvature_[k] * d;
  }
  return out;
}

Vector predict_global(const std::vector<Vector>& observed, const std::vector<double>& weights,
                      std::span<const double> own, double own_weight) {
  if (observed.size() != weights.size())
    throw std::invalid_argument("predict_global: weight count mismatch");
  double total = own_weight;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("predict_global: weights must sum to a positive value");
  Vector out(own.size(), 0.0);
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i].size() != own.size()) throw std::invalid_argument("predict_global: length mismatch");
    const double w = weights[i] / total;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * observed[i][k];
  }
  const double w = own_weight / total;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * own[k];
  return out;
}

PenaltyForm parse_penalty_form(std::string_view name) {
  if (name == "signed") return PenaltyForm::kSigned;
  if (name == "hinge") return PenaltyForm::kHinge;
  throw std::invalid_argument("unknown penalty form '" + std::string(name) + "'");
}

std::string_view to_string(PenaltyForm form) {
  return form == PenaltyForm::kHinge ? "hinge" : "signed";
}

DistanceReference parse_distance_reference(std::string_view name) {
  if (name == "predicted") return DistanceReference::kPredicted;
  if (name == "previous") return DistanceReference::kPrevious;
  if (name == "both") return DistanceReference::kBoth;
  throw std::invalid_argument("unknown distance reference '" + std::string(name) + "'");
}

std::string_view to_string(DistanceReference ref) {
  switch (ref) {
    case DistanceReference::kPredicted: return "predicted";
    case DistanceReference::kPrevious: return "previous";
    case DistanceReference::kBoth: return "both";
  }
  return "predicted";
}

SimilarityAggregate parse_similarity_aggregate(std::string_view name) {
  if (name == "max") return SimilarityAggregate::kMax;
  if (name == "mean") return SimilarityAggregate::kMean;
  throw std::invalid_argument("unknown similarity aggregate '" + std::string(name) + "'");
}

std::string_view to_string(SimilarityAggregate agg) {
  return agg == SimilarityAggregate::kMean ? "mean" : "max";
}

namespace {

struct PenaltyTerm {
  double value = 0.0;
  double slope = 0.0;  // d(term)/d(constraint value)
};

PenaltyTerm penalty(double violation, double multiplier, double rho, PenaltyForm form) {
  const double active = form == PenaltyForm::kHinge ? std::max(0.0, violation) : violation;
  return {multiplier * violation + 0.5 * rho * active * active, multiplier + rho * active};
}

struct SimilarityAggregateValue {
  double smooth = 0.0;
  double hard = 0.0;
  Vector gradient;
};

SimilarityAggregateValue similarity_aggregate(std::span<const double> m, const std::vector<Vector>& observed,
                                              const LagrangianOptions& options) {
  SimilarityAggregateValue out;
  out.gradient.assign(m.size(), 0.0);
  const double m_norm = norm2(m);
  const std::size_t count = observed.size();
  std::vector<double> cosines(count, 0.0);
  std::vector<double> norms(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    norms[i] = norm2(observed[i]);
    if (m_norm > 0.0 && norms[i] > 0.0) cosines[i] = std::clamp(dot(m, observed[i]) / (m_norm * norms[i]), -1.0, 1.0);
  }

  std::vector<double> weights(count, 0.0);
  if (options.aggregate == SimilarityAggregate::kMean) {
    double sum = 0.0;
    for (double c : cosines) sum += c;
    out.smooth = out.hard = sum / static_cast<double>(count);
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(count));
  } else {
    const double top = *std::max_element(cosines.begin(), cosines.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < count; ++i) denom += (weights[i] = std::exp(options.temperature * (cosines[i] - top)));
    for (double& w : weights) w /= denom;
    out.hard = top;
    out.smooth = top + std::log(denom) / options.temperature;
  }

  if (m_norm == 0.0) return out;
  for (std::size_t i = 0; i < count; ++i) {
    if (norms[i] == 0.0 || weights[i] == 0.0) continue;
    const double inv = 1.0 / (m_norm * norms[i]);
    const double radial = cosines[i] / (m_norm * m_norm);
    for (std::size_t k = 0; k < m.size(); ++k)
      out.gradient[k] += weights[i] * (observed[i][k] * inv - radial * m[k]);
  }
  return out;
}

}  // namespace

LagrangianValue augmented_lagrangian(std::span<const double> update, const DualState& dual,
                                     const AttackProblem& problem, const LagrangianOptions& options) {
  if (problem.objective == nullptr) throw std::invalid_argument("augmented_lagrangian: no objective");
  if (problem.global_params.size() != update.size())
    throw std::invalid_argument("augmented_lagrangian: update length does not match the global model");
  if (problem.observed.empty()) throw std::invalid_argument("augmented_lagrangian: no observed updates");

  LagrangianValue out;
  double total = problem.own_weight;
  for (double w : problem.observed_weights) total += w;
  const double own_share = problem.own_weight / total;

  out.predicted_global = predict_global(problem.observed, problem.observed_weights, update, problem.own_weight);
  Vector params = problem.global_params;
  for (std::size_t k = 0; k < params.size(); ++k) params[k] += problem.server_lr * out.predicted_global[k];
  const ObjectiveValue obj = problem.objective->evaluate(params);
  out.objective = obj.value;
  out.value = options.objective_scale * obj.value;
  out.gradient.resize(update.size());
  const double chain = options.objective_scale * problem.server_lr * own_share;
  for (std::size_t k = 0; k < update.size(); ++k) out.gradient[k] = chain * obj.gradient[k];

  Vector offset(update.size());
  for (std::size_t k = 0; k < update.size(); ++k) offset[k] = update[k] - out.predicted_global[k];
  out.distance_predicted = norm2(offset);
  // d/dm ||m - g_p|| = (1 - a') (m - g_p) / d, since g_p moves with m.
  double offset_scale = 1.0 - own_share;
  bool use_previous = false;
  if (options.reference != DistanceReference::kPredicted) {
    if (problem.previous_global.size() != update.size())
      throw std::invalid_argument("augmented_lagrangian: previous global update missing or of wrong length");
    Vector prev(update.size());
    for (std::size_t k = 0; k < update.size(); ++k) prev[k] = update[k] - problem.previous_global[k];
    out.distance_previous = norm2(prev);
    if (options.reference == DistanceReference::kPrevious ||
        out.distance_previous > out.distance_predicted) {
      offset = std::move(prev);
      offset_scale = 1.0;
      use_previous = true;
    }
  }
  out.distance = use_previous ? out.distance_previous : out.distance_predicted;
  const auto sim = similarity_aggregate(update, problem.observed, options);
  out.similarity = sim.smooth;
  out.similarity_hard = sim.hard;

  if (!options.constraints_enabled) return out;

  if (std::isfinite(dual.thresholds.distance)) {
    const double d_t = dual.thresholds.distance;
    const double unit = options.normalize_distance && d_t > 0.0 ? d_t : 1.0;
    const auto term = penalty((out.distance - d_t) / unit, dual.lambda, dual.rho_lambda, options.form);
    out.value -= term.value;
    if (out.distance > 0.0) {
      const double scale = term.slope * offset_scale / (out.distance * unit);
      for (std::size_t k = 0; k < update.size(); ++k) out.gradient[k] -= scale * offset[k];
    }
  }
  if (std::isfinite(dual.thresholds.similarity)) {
    const auto term = penalty(out.similarity - dual.thresholds.similarity, dual.theta, dual.rho_theta, options.form);
    out.value -= term.value;
    for (std::size_t k = 0; k < update.size(); ++k) out.gradient[k] -= term.slope * sim.gradient[k];
  }
  return out;
}

InnerResult inner_maximize(std::span<const double> init, const DualState& dual,
                           const AttackProblem& problem, const LagrangianOptions& lagrangian,
                           const InnerOptions& inner) {
  if (inner.steps < 1) throw std::invalid_argument("inner_maximize: need at least one step");
  if (!(inner.step_size >= 0.0) || !(inner.step_scale >= 0.0))
    throw std::invalid_argument("inner_maximize: step size must be >= 0");

  std::vector<bool> free(init.size(), problem.free_coords.empty());
  for (std::size_t k : problem.free_coords) free.at(k) = true;

  InnerResult result;
  Vector current(init.begin(), init.end());
  LagrangianValue eval = augmented_lagrangian(current, dual, problem, lagrangian);
  if (!std::isfinite(eval.value)) throw std::runtime_error("inner_maximize: non-finite Lagrangian at the initial point");
  result.best = current;
  result.best_value = result.initial_value = eval.value;
  result.trace.push_back(eval.value);

  for (int step = 0; step < inner.steps; ++step) {
    Vector g = eval.gradient;
    for (std::size_t k = 0; k < g.size(); ++k)
      if (!free[k]) g[k] = 0.0;
    // Ascent in u = m / s: the u-gradient is s g, clipped there, and the u-step maps back through s.
    const double gn = inner.step_scale * norm2(g);
    const double scale = gn > inner.clip ? inner.clip / gn : 1.0;
    Vector next = current;
    const double move = inner.step_size * inner.step_scale * inner.step_scale * scale;
    for (std::size_t k = 0; k < next.size(); ++k) next[k] += move * g[k];
    LagrangianValue next_eval = augmented_lagrangian(next, dual, problem, lagrangian);
    if (!std::isfinite(next_eval.value) || !all_finite(next_eval.gradient)) {
      result.rolled_back = true;
      break;
    }
    current = std::move(next);
    eval = std::move(next_eval);
    result.trace.push_back(eval.value);
    if (eval.value > result.best_value) {
      result.best_value = eval.value;
      result.best = current;
    }
  }
  return result;
}

std::int64_t median_claimed_size(const std::vector<UpdateVector>& updates) {
  if (updates.empty()) throw std::invalid_argument("median_claimed_size: no updates");
  std::vector<std::int64_t> sizes;
  for (const auto& u : updates) sizes.push_back(u.claimed_size);
  std::sort(sizes.begin(), sizes.end());
  return sizes[(sizes.size() - 1) / 2];
}

Vector coordinate_mean(const std::vector<UpdateVector>& updates) {
  if (updates.empty()) throw std::invalid_argument("coordinate_mean: no updates");
  Vector mean(updates.front().values.size(), 0.0);
  for (const auto& u : updates) {
    if (u.values.size() != mean.size()) throw std::invalid_argument("coordinate_mean: length mismatch");
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += u.values[k];
  }
  for (double& x : mean) x /= static_cast<double>(updates.size());
  return mean;
}

AugmpAdversary::AugmpAdversary(int agent_id, std::size_t index, AugmpOptions options,
                               std::unique_ptr<SurrogateObjective> objective, SeededRng rng)
    : agent_id_(agent_id),
      index_(index),
      options_(std::move(options)),
      objective_(std::move(objective)),
      rng_(rng) {
  if (!objective_) throw std::invalid_argument("AugmpAdversary: no surrogate objective");
  if (options_.al_penalty_off) options_.lagrangian.constraints_enabled = false;
  dual_.rho_lambda = options_.al_penalty_off ? 0.0 : options_.rho_lambda;
  dual_.rho_theta = options_.al_penalty_off ? 0.0 : options_.rho_theta;
  dual_.step = options_.dual_step;
}

namespace {

Thresholds tightened(const Thresholds& t, double margin) {
  Thresholds out = t;
  if (std::isfinite(out.distance)) out.distance *= 1.0 - margin;
  if (std::isfinite(out.similarity)) out.similarity -= margin;
  return out;
}

}  // namespace

AdversaryRoundOutput AugmpAdversary::run_round(const AdversaryRoundInput& input) {
  if (input.benign == nullptr) throw std::invalid_argument("run_round: no benign updates supplied");
  const SeededRng round_rng = rng_.split("round", static_cast<std::uint64_t>(input.round));
  dual_.thresholds = tightened(input.thresholds, options_.stealth_margin);
  dual_.round = input.round;

  AdversaryRoundOutput out;
  out.dual_used = dual_;
  out.dual_next = dual_;
  out.update.agent_id = agent_id_;
  out.update.round = input.round;
  out.update.is_malicious = true;
  out.report.thresholds = input.thresholds;

  std::string stage = "observe";
  try {
    const auto observed = observe_benign(*input.benign, options_.visibility, round_rng.split("observe"));
    out.observed_count = observed.size();
    out.update.claimed_size = median_claimed_size(observed);
    const Vector benign_mean = coordinate_mean(observed);
    out.update.values = benign_mean;  // fail-stealthy fallback

    stage = "select";
    const std::size_t dim = benign_mean.size();
    const std::size_t count = options_.selection == SelectionPolicy::kAll
                                  ? dim
                                  : std::min(options_.selected_count, dim);
    const auto selected = select_params(observed, count, options_.selection);

    AttackProblem problem;
    for (const auto& u : observed) {
      problem.observed.push_back(u.values);
      problem.observed_weights.push_back(static_cast<double>(u.claimed_size));
    }
    problem.own_weight = static_cast<double>(out.update.claimed_size);
    problem.global_params = input.global_params;
    problem.server_lr = input.server_lr;
    problem.objective = objective_.get();
    problem.free_coords = selected;
    problem.previous_global = input.previous_global_delta;
    if (problem.previous_global.empty()) problem.previous_global.assign(dim, 0.0);

    Vector init_selected(selected.size());
    if (options_.grl_off) {
      for (std::size_t m = 0; m < selected.size(); ++m) init_selected[m] = benign_mean[selected[m]];
    } else {
      stage = "graph";
      const CorrelationGraph graph = build_graph(observed, selected);
      stage = "vgae";
      const VgaeState vgae = train_vgae(graph, options_.vgae, round_rng.split("vgae"));
      out.elbo_trace = vgae.elbo_trace;
      stage = "gst";
      const SpectralBasis basis = gft_basis(laplacian(clamp_nonnegative(graph.adjacency)));
      const SpectralBasis basis_hat = gft_basis(laplacian(vgae.a_hat));
      const Matrix f_hat = reconstruct_features(spectral_coeffs(graph.features, basis), basis_hat);
      std::optional<Vector> predicted;
      if (options_.row_policy == RowPolicy::kNearestGlobal) {
        const Vector benign_only = predict_global(problem.observed, problem.observed_weights, Vector(dim, 0.0), 0.0);
        Vector restricted(selected.size());
        for (std::size_t m = 0; m < selected.size(); ++m) restricted[m] = benign_only[selected[m]];
        predicted = std::move(restricted);
      }
      init_selected = initial_malicious(f_hat, options_.row_policy, index_, round_rng.split("row"), predicted).values;
    }
    const Vector init = scatter_selected(init_selected, selected, benign_mean);

    stage = "refine";
    InnerOptions inner_options = options_.inner;
    if (options_.threshold_relative_step && std::isfinite(dual_.thresholds.distance) && dual_.thresholds.distance > 0.0)
      inner_options.step_scale = dual_.thresholds.distance;
    LagrangianOptions lagrangian = options_.lagrangian;
    if (options_.objective_weight > 0.0) {
      // Positive rescaling of F keeps the constrained maximizer. Capping the objective's
      // gradient (in ascent coordinates) at the initial point bounds how hard it can
      // lean on the penalties when the global model is far from a minimum.
      LagrangianOptions bare = lagrangian;
      bare.constraints_enabled = false;
      bare.objective_scale = 1.0;
      const LagrangianValue at_init = augmented_lagrangian(init, dual_, problem, bare);
      double g2 = 0.0;
      for (std::size_t k : selected) g2 += at_init.gradient[k] * at_init.gradient[k];
      const double g = inner_options.step_scale * std::sqrt(g2);
      if (g > options_.objective_weight && std::isfinite(g)) lagrangian.objective_scale = options_.objective_weight / g;
    }
    const InnerResult inner = inner_maximize(init, dual_, problem, lagrangian, inner_options);
    out.lagrangian_trace = inner.trace;
    const LagrangianValue final_eval = augmented_lagrangian(inner.best, dual_, problem, lagrangian);
    out.update.values = inner.best;
    out.predicted_global = final_eval.predicted_global;
    out.report.distance = final_eval.distance;
    out.report.distance_predicted = final_eval.distance_predicted;
    out.report.similarity = final_eval.similarity_hard;
    if (inner.rolled_back) out.failure = "refine: non-finite Lagrangian, rolled back to last finite iterate";
  } catch (const std::exception& e) {
    out.failure = stage + ": " + e.what();
    if (out.update.values.empty()) out.update.values.assign(input.global_params.size(), 0.0);
    if (out.update.claimed_size <= 0) out.update.claimed_size = 1;
  }

  out.report.distance_ok = out.report.distance <= input.thresholds.distance;
  out.report.similarity_ok = out.report.similarity <= input.thresholds.similarity;
  if (!options_.al_penalty_off) dual_ = dual_update(dual_, out.report.distance, out.report.similarity, options_.dual_schedule);
  out.dual_next = dual_;
  return out;
}

std::vector<AdversaryRoundOutput> run_augmp_round(std::vector<AugmpAdversary>& adversaries,
                                                  const AdversaryRoundInput& input) {
  std::vector<AdversaryRoundOutput> out;
  for (auto& adversary : adversaries) out.push_back(adversary.run_round(input));
  return out;
}

}  // namespace augmp
