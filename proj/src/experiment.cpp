#include "augmp/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "augmp/baselines.hpp"
#include "augmp/sentinel.hpp"

namespace augmp {

namespace fs = std::filesystem;

const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> header = {
      "round",
      "global_accuracy",
      "global_loss",
      "local_accuracy",
      "distance_threshold",
      "similarity_threshold",
      "benign_distance_min",
      "benign_distance_mean",
      "benign_distance_max",
      "malicious_distance_mean",
      "malicious_distance_max",
      "benign_score_min",
      "benign_score_mean",
      "benign_score_max",
      "malicious_score_mean",
      "malicious_score_max",
      "pair_similarity_min",
      "pair_similarity_mean",
      "pair_similarity_max",
      "kept",
      "benign_flagged_distance",
      "benign_flagged_similarity",
      "malicious_flagged_distance",
      "malicious_flagged_similarity",
      "defense_fallback",
      "stealth_pass",
      "lambda_mean",
      "theta_mean",
      "attack_distance_mean",
      "attack_similarity_mean",
      "prediction_gap",
      "attack_failures",
      "agent_ids",
      "agent_malicious",
      "agent_distances",
      "agent_scores",
      "agent_flags",
  };
  return header;
}

std::string format_metric(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";  // also folds -0
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 9);
  return std::string(buf, r.ptr);
}

namespace {

struct Summary {
  double min = 0.0, mean = 0.0, max = 0.0;
  bool empty = true;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.empty = false;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

std::string cell(double v) { return format_metric(v); }
std::string cell(const Summary& s, double Summary::*field) { return s.empty ? "" : format_metric(s.*field); }
std::string threshold_cell(double v) { return std::isfinite(v) ? format_metric(v) : ""; }

template <class T, class F>
std::string joined(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ';';
    out += f(items[i]);
  }
  return out;
}

}  // namespace

std::string metrics_row(const RoundRecord& r) {
  std::vector<double> bd, md, bs, ms;
  int bfd = 0, bfs = 0, mfd = 0, mfs = 0;
  for (const auto& a : r.agents) {
    (a.malicious ? md : bd).push_back(a.distance);
    (a.malicious ? ms : bs).push_back(a.score);
    if (a.malicious) {
      mfd += a.flagged_distance;
      mfs += a.flagged_similarity;
    } else {
      bfd += a.flagged_distance;
      bfs += a.flagged_similarity;
    }
  }
  const Summary sbd = summarize(bd), smd = summarize(md), sbs = summarize(bs), sms = summarize(ms);
  std::vector<double> lambdas, thetas, adist, asim;
  int failures = 0;
  bool stealth = true;
  for (const auto& a : r.adversaries) {
    lambdas.push_back(a.lambda);
    thetas.push_back(a.theta);
    adist.push_back(a.distance);
    asim.push_back(a.similarity);
    failures += !a.failure.empty();
    stealth = stealth && a.stealth_ok;
  }
  const bool has_malicious = !md.empty();
  const bool has_augmp = !r.adversaries.empty();

  std::vector<std::string> cells = {
      std::to_string(r.round),
      cell(r.global_accuracy),
      cell(r.global_loss),
      cell(r.local_accuracy),
      threshold_cell(r.thresholds.distance),
      threshold_cell(r.thresholds.similarity),
      cell(sbd, &Summary::min),
      cell(sbd, &Summary::mean),
      cell(sbd, &Summary::max),
      cell(smd, &Summary::mean),
      cell(smd, &Summary::max),
      cell(sbs, &Summary::min),
      cell(sbs, &Summary::mean),
      cell(sbs, &Summary::max),
      cell(sms, &Summary::mean),
      cell(sms, &Summary::max),
      cell(r.pair_similarity_min),
      cell(r.pair_similarity_mean),
      cell(r.pair_similarity_max),
      std::to_string(r.kept),
      std::to_string(bfd),
      std::to_string(bfs),
      has_malicious ? std::to_string(mfd) : "",
      has_malicious ? std::to_string(mfs) : "",
      r.defense_fallback ? "1" : "0",
      has_malicious ? (stealth ? "1" : "0") : "",
      has_augmp ? cell(summarize(lambdas).mean) : "",
      has_augmp ? cell(summarize(thetas).mean) : "",
      has_augmp ? cell(summarize(adist).mean) : "",
      has_augmp ? cell(summarize(asim).mean) : "",
      has_augmp ? cell(r.prediction_gap) : "",
      has_augmp ? std::to_string(failures) : "",
      joined(r.agents, [](const AgentRecord& a) { return std::to_string(a.agent_id); }),
      joined(r.agents, [](const AgentRecord& a) { return std::string(a.malicious ? "1" : "0"); }),
      joined(r.agents, [](const AgentRecord& a) { return format_metric(a.distance); }),
      joined(r.agents, [](const AgentRecord& a) { return format_metric(a.score); }),
      joined(r.agents, [](const AgentRecord& a) {
        return std::string(a.flagged_distance ? "d" : "") + (a.flagged_similarity ? "s" : "") +
               (a.flagged_distance || a.flagged_similarity ? "" : "-");
      }),
  };
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line;
}

namespace {

ModelSpec model_spec(const ExperimentConfig& c) {
  ModelSpec spec;
  spec.input_dim = static_cast<std::size_t>(c.input_dim);
  spec.classes = c.classes;
  spec.layers = static_cast<std::size_t>(c.layers);
  spec.hidden_dim = static_cast<std::size_t>(c.hidden_dim);
  spec.lora.rank = static_cast<std::size_t>(c.lora_rank);
  spec.lora.alpha = c.lora_alpha;
  spec.lora.dropout = c.lora_dropout;
  spec.lora.scaling = c.lora_scaling == "none" ? LoraScaling::kNone : LoraScaling::kAlphaOverR;
  return spec;
}

AugmpOptions augmp_options(const ExperimentConfig& c) {
  AugmpOptions o;
  o.visibility = c.visibility;
  o.selected_count = static_cast<std::size_t>(c.selected_count);
  o.selection = parse_selection_policy(c.selection);
  o.vgae.hidden = static_cast<std::size_t>(c.vgae_hidden);
  o.vgae.latent = static_cast<std::size_t>(c.vgae_latent);
  o.vgae.epochs = c.vgae_epochs;
  o.vgae.lr = c.vgae_lr;
  o.vgae.featureless = c.vgae_featureless;
  o.vgae.decode_from_mean = c.vgae_decode_from_mean;
  o.row_policy = parse_row_policy(c.row_policy);
  o.lagrangian.form = parse_penalty_form(c.penalty_form);
  o.lagrangian.aggregate = parse_similarity_aggregate(c.similarity_aggregate);
  o.lagrangian.reference = parse_distance_reference(c.distance_reference);
  o.lagrangian.temperature = c.temperature;
  o.lagrangian.normalize_distance = c.normalize_distance;
  o.dual_schedule.normalize_distance = c.normalize_distance;
  o.inner.steps = c.inner_steps;
  o.inner.step_size = c.inner_step_size;
  o.inner.clip = c.inner_clip;
  o.dual_schedule.adaptive_rho = c.adaptive_rho;
  o.rho_lambda = c.rho_lambda;
  o.rho_theta = c.rho_theta;
  o.dual_step = c.dual_step;
  o.stealth_margin = c.stealth_margin;
  o.threshold_relative_step = c.relative_step;
  o.objective_weight = c.objective_weight;
  o.grl_off = c.grl_off;
  o.al_penalty_off = c.al_penalty_off;
  return o;
}

nlohmann::json debug_record(int round, const std::vector<AdversaryRoundOutput>& outs) {
  nlohmann::json j;
  j["round"] = round;
  j["adversaries"] = nlohmann::json::array();
  for (const auto& o : outs) {
    nlohmann::json a;
    a["agent_id"] = o.update.agent_id;
    a["lambda"] = o.dual_used.lambda;
    a["theta"] = o.dual_used.theta;
    a["lambda_next"] = o.dual_next.lambda;
    a["theta_next"] = o.dual_next.theta;
    a["distance"] = o.report.distance;
    a["similarity"] = o.report.similarity;
    a["lagrangian_trace"] = o.lagrangian_trace;
    a["elbo_trace"] = o.elbo_trace;
    a["observed"] = o.observed_count;
    a["failure"] = o.failure;
    j["adversaries"].push_back(std::move(a));
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

double rate(int hits, int total) { return total > 0 ? static_cast<double>(hits) / total : 0.0; }

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const std::optional<std::string>& out_dir) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  const SeededRng root(config.seed);
  const ModelSpec spec = model_spec(config);
  const Backbone backbone(spec, root.split("backbone"));
  const std::size_t dim = spec.update_dim();

  const std::size_t input_dim = static_cast<std::size_t>(config.input_dim);
  const Dataset train = synth_dataset(config.classes, input_dim, static_cast<std::size_t>(config.train_per_class),
                                      config.separation, root.split("train-data"), "train");
  const Dataset test = synth_dataset(config.classes, input_dim, static_cast<std::size_t>(config.test_per_class),
                                     config.separation, root.split("test-data"), "test");
  const auto parts = dirichlet_partition(train, static_cast<std::size_t>(config.agents), config.dirichlet_beta,
                                         root.split("partition"));
  std::vector<LoraAdapter> adapters;
  for (int i = 0; i < config.agents; ++i)
    adapters.push_back(LoraAdapter::init(spec, root.split("adapter", static_cast<std::uint64_t>(i))));

  const bool attacking = config.attack != "none" && config.adversaries > 0;
  const int adversary_count = attacking ? config.adversaries : 0;
  std::vector<AugmpAdversary> augmp;
  if (attacking && config.attack == "augmp") {
    const AugmpOptions options = augmp_options(config);
    for (int j = 0; j < adversary_count; ++j) {
      const auto ju = static_cast<std::uint64_t>(j);
      const Dataset own = synth_dataset(config.classes, input_dim, static_cast<std::size_t>(config.adversary_per_class),
                                        config.separation, root.split("adversary-data", ju), "adversary");
      auto [keep, heldout] = holdout_split(own, config.adversary_holdout, root.split("adversary-holdout", ju));
      augmp.emplace_back(config.agents + j, static_cast<std::size_t>(j), options,
                         std::make_unique<HeldoutLoss>(backbone, std::move(heldout)),
                         root.split("adversary", ju));
    }
  }

  const TrainOptions train_options{config.local_epochs, config.local_lr};
  const bool use_distance = config.defense == "distance" || config.defense == "both";
  const bool use_similarity = config.defense == "similarity" || config.defense == "both";
  const ScorePolicy score_policy = parse_score_policy(config.score_policy);

  GlobalState global;
  global.params.assign(dim, 0.0);
  global.server_lr = config.server_lr;
  Vector reference(dim, 0.0);  // last realized global update
  Thresholds thresholds{config.initial_distance, config.initial_similarity};

  std::optional<fs::path> out;
  if (out_dir) {
    out = fs::path(*out_dir);
    fs::create_directories(*out);
    if (config.debug) fs::create_directories(*out / "debug");
  }

  RunResult result;
  std::string csv;
  for (std::size_t i = 0; i < metrics_header().size(); ++i) csv += (i ? "," : "") + metrics_header()[i];
  csv += "\n";

  for (int t = 1; t <= config.rounds; ++t) {
    const auto tu = static_cast<std::uint64_t>(t);
    RoundRecord rec;
    rec.round = t;
    rec.thresholds = thresholds;

    std::vector<UpdateVector> benign;
    double local_acc = 0.0;
    for (int i = 0; i < config.agents; ++i) {
      LocalResult lr;
      try {
        lr = local_train(backbone, global, adapters[static_cast<std::size_t>(i)], parts[static_cast<std::size_t>(i)],
                         train_options, root.split("local", static_cast<std::uint64_t>(i)).split("round", tu));
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("round " + std::to_string(t) + ", agent " + std::to_string(i) + ": " + e.what());
      }
      lr.update.agent_id = i;
      lr.update.round = t;
      Vector local_params = global.params;
      for (std::size_t k = 0; k < dim; ++k) local_params[k] += lr.update.values[k];
      local_acc += evaluate(backbone, local_params, test);
      benign.push_back(std::move(lr.update));
    }
    rec.local_accuracy = local_acc / static_cast<double>(config.agents);

    std::vector<UpdateVector> malicious;
    std::vector<AdversaryRoundOutput> augmp_out;
    if (attacking && config.attack == "augmp") {
      AdversaryRoundInput input;
      input.round = t;
      input.benign = &benign;
      input.global_params = global.params;
      input.server_lr = global.server_lr;
      input.thresholds = thresholds;
      input.previous_global_delta = reference;
      augmp_out = run_augmp_round(augmp, input);
      for (const auto& o : augmp_out) malicious.push_back(o.update);
    } else if (attacking) {
      for (int j = 0; j < adversary_count; ++j) {
        const SeededRng arng = root.split(config.attack, static_cast<std::uint64_t>(j)).split("round", tu);
        const auto observed = observe_benign(benign, config.visibility, arng.split("observe"));
        const BenignStats stats = benign_stats(observed);
        UpdateVector u;
        u.agent_id = config.agents + j;
        u.round = t;
        u.is_malicious = true;
        u.claimed_size = median_claimed_size(observed);
        if (config.attack == "alie") {
          const double z = config.alie_z_policy == "quantile"
                               ? alie_quantile_z(static_cast<std::size_t>(config.agents + adversary_count),
                                                 static_cast<std::size_t>(adversary_count))
                               : config.alie_z;
          u.values = alie_update(stats, z, parse_sign_policy(config.alie_sign));
        } else {
          u.values = rmp_update(stats, config.rmp_scale, arng.split("sample"));
        }
        malicious.push_back(std::move(u));
      }
    }

    std::vector<UpdateVector> submitted = benign;
    submitted.insert(submitted.end(), malicious.begin(), malicious.end());

    // Screening metrics are recorded for every run; they only gate aggregation when enabled.
    const FilterResult by_distance = distance_filter(submitted, reference, thresholds.distance, t);
    const FilterResult by_similarity = similarity_filter(submitted, thresholds.similarity, score_policy, t);
    std::vector<UpdateVector> kept;
    for (std::size_t j = 0; j < submitted.size(); ++j) {
      AgentRecord a;
      a.agent_id = submitted[j].agent_id;
      a.malicious = submitted[j].is_malicious;
      a.distance = by_distance.verdict.agents[j].metric;
      a.score = by_similarity.verdict.agents[j].metric;
      a.flagged_distance = by_distance.verdict.agents[j].flagged;
      a.flagged_similarity = by_similarity.verdict.agents[j].flagged;
      a.kept = !((use_distance && a.flagged_distance) || (use_similarity && a.flagged_similarity));
      if (a.kept) kept.push_back(submitted[j]);
      rec.agents.push_back(a);
    }
    if (kept.empty()) {
      kept = submitted;
      rec.defense_fallback = true;
      for (auto& a : rec.agents) a.kept = true;
    }
    rec.kept = kept.size();

    std::vector<double> pairs;
    for (std::size_t i = 0; i < submitted.size(); ++i)
      for (std::size_t j = i + 1; j < submitted.size(); ++j) pairs.push_back(cosine(submitted[i].values, submitted[j].values));
    const Summary sp = summarize(pairs);
    rec.pair_similarity_min = sp.min;
    rec.pair_similarity_mean = sp.mean;
    rec.pair_similarity_max = sp.max;

    const Vector delta = aggregate(kept);

    for (std::size_t j = 0; j < augmp_out.size(); ++j) {
      const auto& o = augmp_out[j];
      AdversaryRecord a;
      a.agent_id = o.update.agent_id;
      a.lambda = o.dual_used.lambda;
      a.theta = o.dual_used.theta;
      a.distance = o.report.distance;
      a.similarity = o.report.similarity;
      a.failure = o.failure;
      rec.adversaries.push_back(a);
      if (!o.predicted_global.empty()) rec.prediction_gap += euclid(o.predicted_global, delta);
    }
    if (!augmp_out.empty()) rec.prediction_gap /= static_cast<double>(augmp_out.size());
    // Sentinel-side stealth check for every malicious submission.
    std::size_t adv = 0;
    for (const auto& a : rec.agents) {
      if (!a.malicious) continue;
      const bool ok = !a.flagged_distance && !a.flagged_similarity;
      if (adv < rec.adversaries.size()) rec.adversaries[adv].stealth_ok = ok;
      else {
        AdversaryRecord r;
        r.agent_id = a.agent_id;
        r.stealth_ok = ok;
        rec.adversaries.push_back(r);
      }
      ++adv;
    }

    global = apply_global(global, delta, global.server_lr);
    rec.global_accuracy = evaluate(backbone, global.params, test);
    rec.global_loss = softmax_xent(backbone.effective(global.params), test, false).loss;
    if (!std::isfinite(rec.global_loss))
      throw std::runtime_error("round " + std::to_string(t) + ": non-finite global loss");

    if (benign.size() >= 2) {
      std::vector<Vector> values;
      for (const auto& b : benign) values.push_back(b.values);
      thresholds = estimate_thresholds(values, delta, config.kappa, config.percentile);
    }
    reference = delta;

    if (out && config.debug && !augmp_out.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "round_%03d.json", t);
      write_text(*out / "debug" / name, debug_record(t, augmp_out).dump(2) + "\n");
    }
    csv += metrics_row(rec) + "\n";
    result.rounds.push_back(std::move(rec));
  }

  // Summary.
  double best = 0.0, best_local = 0.0;
  int mal_pairs = 0, mal_fd = 0, mal_fs = 0, ben_pairs = 0, ben_fd = 0, ben_fs = 0;
  int stealth_rounds = 0, stealth_pass = 0, failures = 0, fallbacks = 0;
  for (const auto& r : result.rounds) {
    best = std::max(best, r.global_accuracy);
    best_local = std::max(best_local, r.local_accuracy);
    fallbacks += r.defense_fallback;
    bool any_mal = false, all_ok = true;
    for (const auto& a : r.agents) {
      if (a.malicious) {
        ++mal_pairs;
        mal_fd += a.flagged_distance;
        mal_fs += a.flagged_similarity;
        any_mal = true;
      } else {
        ++ben_pairs;
        ben_fd += a.flagged_distance;
        ben_fs += a.flagged_similarity;
      }
    }
    for (const auto& a : r.adversaries) {
      all_ok = all_ok && a.stealth_ok;
      failures += !a.failure.empty();
    }
    if (any_mal) {
      ++stealth_rounds;
      stealth_pass += all_ok;
    }
  }
  nlohmann::json s;
  s["rounds"] = config.rounds;
  s["seed"] = config.seed;
  s["attack"] = config.attack;
  s["defense"] = config.defense;
  s["update_dim"] = dim;
  s["final_accuracy"] = result.rounds.back().global_accuracy;
  s["best_accuracy"] = best;
  s["final_local_accuracy"] = result.rounds.back().local_accuracy;
  s["best_local_accuracy"] = best_local;
  s["benign_flag_rate_distance"] = rate(ben_fd, ben_pairs);
  s["benign_flag_rate_similarity"] = rate(ben_fs, ben_pairs);
  if (mal_pairs > 0) {
    s["malicious_flag_rate_distance"] = rate(mal_fd, mal_pairs);
    s["malicious_flag_rate_similarity"] = rate(mal_fs, mal_pairs);
    s["stealth_pass_rate"] = rate(stealth_pass, stealth_rounds);
  } else {
    s["malicious_flag_rate_distance"] = nullptr;
    s["malicious_flag_rate_similarity"] = nullptr;
    s["stealth_pass_rate"] = nullptr;
  }
  s["attack_failures"] = failures;
  s["defense_fallbacks"] = fallbacks;
  s["config"] = to_json(config);
  s["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.summary = s;

  if (out) {
    write_text(*out / "metrics.csv", csv);
    write_text(*out / "summary.json", s.dump(2) + "\n");
  }
  return result;
}

std::string sweep_key(const std::string& axis) {
  if (axis == "r" || axis == "rank" || axis == "model.lora_rank" || axis == "lora_rank") return "model.lora_rank";
  if (axis == "alpha" || axis == "model.lora_alpha" || axis == "lora_alpha") return "model.lora_alpha";
  if (axis == "J" || axis == "adversaries" || axis == "run.adversaries") return "run.adversaries";
  if (axis == "visibility" || axis == "attack.visibility") return "attack.visibility";
  if (axis == "attack" || axis == "run.attack") return "run.attack";
  throw std::invalid_argument("sweep: field '" + axis +
                              "' is not sweepable (use r, alpha, J, visibility or attack)");
}

nlohmann::json run_sweep(const ExperimentConfig& base, const std::string& axis,
                         const std::vector<std::string>& values, const std::string& out_dir) {
  const std::string key = sweep_key(axis);
  if (values.empty()) throw std::invalid_argument("sweep: no values given");
  // Validate every point before running any of them.
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    set_field(c, key, v);
    validate(c);
    configs.push_back(c);
  }
  fs::create_directories(out_dir);
  nlohmann::json index;
  index["axis"] = key;
  index["seed"] = base.seed;
  index["runs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    const RunResult r = run_experiment(configs[i], (fs::path(out_dir) / name).string());
    index["runs"].push_back({{"index", i},
                             {"value", values[i]},
                             {"dir", name},
                             {"final_accuracy", r.summary["final_accuracy"]}});
  }
  write_text(fs::path(out_dir) / "index.json", index.dump(2) + "\n");
  return index;
}

}  // namespace augmp
