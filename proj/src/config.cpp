#include "augmp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace augmp {

namespace {

using Member = std::variant<std::uint64_t ExperimentConfig::*, int ExperimentConfig::*,
                            double ExperimentConfig::*, bool ExperimentConfig::*,
                            std::string ExperimentConfig::*>;

struct Field {
  const char* section;
  const char* key;
  Member member;
};

using C = ExperimentConfig;

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"run", "seed", &C::seed},
      {"run", "agents", &C::agents},
      {"run", "adversaries", &C::adversaries},
      {"run", "rounds", &C::rounds},
      {"run", "server_lr", &C::server_lr},
      {"run", "attack", &C::attack},
      {"run", "defense", &C::defense},
      {"run", "debug", &C::debug},
      {"data", "classes", &C::classes},
      {"data", "input_dim", &C::input_dim},
      {"data", "train_per_class", &C::train_per_class},
      {"data", "test_per_class", &C::test_per_class},
      {"data", "adversary_per_class", &C::adversary_per_class},
      {"data", "separation", &C::separation},
      {"data", "dirichlet_beta", &C::dirichlet_beta},
      {"data", "adversary_holdout", &C::adversary_holdout},
      {"model", "layers", &C::layers},
      {"model", "hidden_dim", &C::hidden_dim},
      {"model", "lora_rank", &C::lora_rank},
      {"model", "lora_alpha", &C::lora_alpha},
      {"model", "lora_dropout", &C::lora_dropout},
      {"model", "lora_scaling", &C::lora_scaling},
      {"train", "local_epochs", &C::local_epochs},
      {"train", "local_lr", &C::local_lr},
      {"attack", "visibility", &C::visibility},
      {"attack", "selected_count", &C::selected_count},
      {"attack", "selection", &C::selection},
      {"attack", "row_policy", &C::row_policy},
      {"attack", "penalty_form", &C::penalty_form},
      {"attack", "similarity_aggregate", &C::similarity_aggregate},
      {"attack", "distance_reference", &C::distance_reference},
      {"attack", "temperature", &C::temperature},
      {"attack", "inner_steps", &C::inner_steps},
      {"attack", "inner_step_size", &C::inner_step_size},
      {"attack", "inner_clip", &C::inner_clip},
      {"attack", "relative_step", &C::relative_step},
      {"attack", "normalize_distance", &C::normalize_distance},
      {"attack", "objective_weight", &C::objective_weight},
      {"attack", "rho_lambda", &C::rho_lambda},
      {"attack", "rho_theta", &C::rho_theta},
      {"attack", "dual_step", &C::dual_step},
      {"attack", "adaptive_rho", &C::adaptive_rho},
      {"attack", "stealth_margin", &C::stealth_margin},
      {"attack", "grl_off", &C::grl_off},
      {"attack", "al_penalty_off", &C::al_penalty_off},
      {"thresholds", "kappa", &C::kappa},
      {"thresholds", "percentile", &C::percentile},
      {"thresholds", "initial_distance", &C::initial_distance},
      {"thresholds", "initial_similarity", &C::initial_similarity},
      {"vgae", "hidden", &C::vgae_hidden},
      {"vgae", "latent", &C::vgae_latent},
      {"vgae", "epochs", &C::vgae_epochs},
      {"vgae", "lr", &C::vgae_lr},
      {"vgae", "featureless", &C::vgae_featureless},
      {"vgae", "decode_from_mean", &C::vgae_decode_from_mean},
      {"baselines", "alie_z", &C::alie_z},
      {"baselines", "alie_z_policy", &C::alie_z_policy},
      {"baselines", "alie_sign", &C::alie_sign},
      {"baselines", "rmp_scale", &C::rmp_scale},
      {"defense", "score_policy", &C::score_policy},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const Field& find_field(std::string_view key, std::string_view section = {}) {
  const Field* hit = nullptr;
  std::string_view name = key;
  if (section.empty()) {
    if (const auto dot = key.find('.'); dot != std::string_view::npos) {
      section = key.substr(0, dot);
      name = key.substr(dot + 1);
    }
  }
  for (const auto& f : fields()) {
    if (name != f.key || (!section.empty() && section != f.section)) continue;
    if (hit) throw std::invalid_argument("config: ambiguous key '" + std::string(key) + "'");
    hit = &f;
  }
  if (!hit) {
    std::string full = section.empty() ? std::string(key) : std::string(section) + "." + std::string(name);
    throw std::invalid_argument("config: unknown key '" + full + "'");
  }
  return *hit;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";  // keep it visibly real
  return s;
}

template <class T>
T parse_number(std::string_view text, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, value);
  if (r.ec != std::errc() || r.ptr != end)
    throw std::invalid_argument("config: field " + key + " expects a number, got '" + std::string(text) + "'");
  return value;
}

std::string unquote(std::string_view text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') return std::string(text.substr(1, text.size() - 2));
  return std::string(text);
}

void assign(ExperimentConfig& c, const Field& f, std::string_view raw) {
  const std::string key = std::string(f.section) + "." + f.key;
  const std::string text = unquote(trim(raw));
  std::visit(
      [&](auto member) {
        using T = std::remove_cvref_t<decltype(c.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          c.*member = text;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (text == "true" || text == "1") c.*member = true;
          else if (text == "false" || text == "0") c.*member = false;
          else throw std::invalid_argument("config: field " + key + " expects true/false, got '" + text + "'");
        } else {
          c.*member = parse_number<T>(text, key);
        }
      },
      f.member);
}

std::string render(const ExperimentConfig& c, const Field& f) {
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(c.*member)>;
        const auto& v = c.*member;
        if constexpr (std::is_same_v<T, std::string>) return "\"" + v + "\"";
        else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>) return format_double(v);
        else return std::to_string(v);
      },
      f.member);
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + field + " " + what);
}

template <class... Names>
void require_one_of(const std::string& value, const std::string& field, Names... names) {
  if (((value == names) || ...)) return;
  std::string list;
  ((list += std::string(list.empty() ? "" : ", ") + names), ...);
  throw std::invalid_argument("config: " + field + " must be one of {" + list + "}, got '" + value + "'");
}

}  // namespace

void validate(const ExperimentConfig& c) {
  require(c.agents >= 1, "run.agents", "must be >= 1");
  require(c.adversaries >= 0, "run.adversaries", "must be >= 0");
  require(c.rounds >= 1, "run.rounds", "must be >= 1");
  require(std::isfinite(c.server_lr) && c.server_lr >= 0.0, "run.server_lr", "must be finite and >= 0");
  require_one_of(c.attack, "run.attack", "none", "augmp", "alie", "rmp");
  require_one_of(c.defense, "run.defense", "none", "distance", "similarity", "both");
  require(c.classes >= 2, "data.classes", "must be >= 2");
  require(c.input_dim >= c.classes - 1, "data.input_dim", "must be >= classes - 1");
  require(c.train_per_class >= 1, "data.train_per_class", "must be >= 1");
  require(c.test_per_class >= 1, "data.test_per_class", "must be >= 1");
  require(c.adversary_per_class >= 1, "data.adversary_per_class", "must be >= 1");
  require(std::isfinite(c.separation) && c.separation >= 0.0, "data.separation", "must be finite and >= 0");
  require(c.dirichlet_beta > 0.0, "data.dirichlet_beta", "must be > 0");
  require(c.adversary_holdout > 0.0 && c.adversary_holdout < 1.0, "data.adversary_holdout", "must be in (0, 1)");
  require(c.layers >= 1, "model.layers", "must be >= 1");
  require(c.hidden_dim >= 1, "model.hidden_dim", "must be >= 1");
  require(c.lora_rank >= 1, "model.lora_rank", "must be >= 1");
  require(c.lora_alpha > 0.0, "model.lora_alpha", "must be > 0");
  require(c.lora_dropout >= 0.0 && c.lora_dropout < 1.0, "model.lora_dropout", "must be in [0, 1)");
  require_one_of(c.lora_scaling, "model.lora_scaling", "alpha_over_r", "none");
  require(c.local_epochs >= 0, "train.local_epochs", "must be >= 0");
  require(c.local_lr >= 0.0, "train.local_lr", "must be >= 0");
  require(c.visibility > 0.0 && c.visibility <= 1.0, "attack.visibility", "must be in (0, 1]");
  require(c.selected_count >= 2, "attack.selected_count", "must be >= 2");
  require_one_of(c.selection, "attack.selection", "variance-top", "all");
  require_one_of(c.row_policy, "attack.row_policy", "random", "cycle", "nearest-global");
  require_one_of(c.penalty_form, "attack.penalty_form", "signed", "hinge");
  require_one_of(c.similarity_aggregate, "attack.similarity_aggregate", "max", "mean");
  require_one_of(c.distance_reference, "attack.distance_reference", "predicted", "previous", "both");
  require(c.temperature > 0.0, "attack.temperature", "must be > 0");
  require(c.inner_steps >= 1, "attack.inner_steps", "must be >= 1");
  require(c.inner_step_size >= 0.0, "attack.inner_step_size", "must be >= 0");
  require(c.inner_clip > 0.0, "attack.inner_clip", "must be > 0");
  require(c.rho_lambda > 0.0, "attack.rho_lambda", "must be > 0");
  require(c.rho_theta > 0.0, "attack.rho_theta", "must be > 0");
  require(c.dual_step > 0.0, "attack.dual_step", "must be > 0");
  require(c.stealth_margin >= 0.0 && c.stealth_margin < 1.0, "attack.stealth_margin", "must be in [0, 1)");
  require(c.objective_weight >= 0.0, "attack.objective_weight", "must be >= 0");
  require(c.kappa >= 0.0, "thresholds.kappa", "must be >= 0");
  require(c.percentile >= 0.0 && c.percentile <= 100.0, "thresholds.percentile", "must be in [0, 100]");
  require(!std::isnan(c.initial_distance) && c.initial_distance >= 0.0, "thresholds.initial_distance",
          "must be >= 0 (inf disables the round-1 constraint)");
  require(!std::isnan(c.initial_similarity), "thresholds.initial_similarity", "must be a number");
  require(c.vgae_hidden >= 1, "vgae.hidden", "must be >= 1");
  require(c.vgae_latent >= 1, "vgae.latent", "must be >= 1");
  require(c.vgae_epochs >= 0, "vgae.epochs", "must be >= 0");
  require(c.vgae_lr >= 0.0, "vgae.lr", "must be >= 0");
  require(c.alie_z >= 0.0, "baselines.alie_z", "must be >= 0");
  require_one_of(c.alie_z_policy, "baselines.alie_z_policy", "fixed", "quantile");
  require_one_of(c.alie_sign, "baselines.alie_sign", "against-mean", "with-mean");
  require(c.rmp_scale > 0.0, "baselines.rmp_scale", "must be > 0");
  require_one_of(c.score_policy, "defense.score_policy", "mean", "max");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(std::string(f.section) + "." + f.key);
  return out;
}

std::string serialize(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + render(config, f) + "\n";
  }
  return out;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    try {
      assign(config, find_field(key, section), std::string_view(t).substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void set_field(ExperimentConfig& config, std::string_view key, std::string_view value) {
  assign(config, find_field(key), value);
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw std::invalid_argument("override '" + std::string(assignment) + "' is not key=value");
  set_field(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string get_field(const ExperimentConfig& config, std::string_view key) {
  return unquote(render(config, find_field(key)));
}

nlohmann::json to_json(const ExperimentConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields()) {
    std::visit([&](auto member) { j[f.section][f.key] = config.*member; }, f.member);
  }
  return j;
}

}  // namespace augmp
