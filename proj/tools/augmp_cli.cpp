// augmp: run, sweep and verify entry points.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "augmp/config.hpp"
#include "augmp/experiment.hpp"
#include "augmp/verify.hpp"

namespace {

// The only environment knob: redirect output.
std::string output_dir(const std::string& flag) {
  if (const char* env = std::getenv("AUGMP_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return flag;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated LoRA fine-tuning simulator with model-manipulation attacks and defenses"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis, values, suite;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--set", overrides, "Override, section.key=value (repeatable)");

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
  sweep->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "r, alpha, J, visibility or attack")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--set", overrides, "Override, section.key=value (repeatable)");

  auto* verify = app.add_subcommand("verify", "Run invariant suites");
  verify->add_option("--suite", suite, "numerics, gradients, gst, duals, determinism or all")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      const auto results = augmp::run_verify(suite);
      return augmp::print_report(results, std::cout) ? 0 : 1;
    }
    augmp::ExperimentConfig config = augmp::load_config(config_path);
    for (const auto& o : overrides) augmp::apply_override(config, o);
    augmp::validate(config);
    const std::string out = output_dir(out_dir);
    if (run->parsed()) {
      const auto result = augmp::run_experiment(config, out);
      std::cout << "final_accuracy " << result.summary["final_accuracy"].get<double>() << "\n"
                << "wrote " << out << "/metrics.csv and " << out << "/summary.json\n";
    } else {
      const auto index = augmp::run_sweep(config, axis, split_list(values), out);
      for (const auto& r : index["runs"])
        std::cout << r["dir"].get<std::string>() << "  " << index["axis"].get<std::string>() << "="
                  << r["value"].get<std::string>() << "  final_accuracy " << r["final_accuracy"].get<double>()
                  << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
