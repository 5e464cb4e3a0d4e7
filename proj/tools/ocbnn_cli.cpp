// Command-line front end: run, compare and sweep experiment configs.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ocbnn/experiment.hpp"

namespace {

// Error category and exit status for a library exception.
std::pair<const char*, int> classify(const std::exception& e) {
  if (dynamic_cast<const ocbnn::ConfigError*>(&e)) return {"config_error", 2};
  if (dynamic_cast<const ocbnn::SchemaError*>(&e)) return {"schema_error", 2};
  if (dynamic_cast<const ocbnn::ContractError*>(&e)) return {"contract_error", 2};
  if (dynamic_cast<const ocbnn::ShapeError*>(&e)) return {"shape_error", 2};
  if (dynamic_cast<const ocbnn::MetricError*>(&e)) return {"metric_error", 3};
  if (dynamic_cast<const ocbnn::NumericError*>(&e)) return {"numeric_error", 4};
  if (dynamic_cast<const ocbnn::SamplingError*>(&e)) return {"sampling_error", 4};
  if (dynamic_cast<const ocbnn::Error*>(&e)) return {"error", 1};
  return {"internal_error", 1};
}

void print_metrics(const ocbnn::RunResult& r) {
  std::cout << "output: " << r.output_dir << "\nconfig_hash: " << r.config_hash << "\n";
  for (const auto& e : r.metrics.entries()) std::cout << "  " << e.name << " = " << e.value << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Output-constrained Bayesian neural networks"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string output_root, config, dir_a, dir_b, metric, param, values;

  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("config", config, "Experiment TOML")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--output-root", output_root, std::string("Output root (default $") + ocbnn::kOutputRootEnv + " or ./runs)");

  auto* compare = app.add_subcommand("compare", "Compare one metric across two run directories");
  compare->add_option("dir_a", dir_a)->required();
  compare->add_option("dir_b", dir_b)->required();
  compare->add_option("--metric", metric)->required();

  auto* sweep = app.add_subcommand("sweep", "Run a config once per value of one parameter");
  sweep->add_option("config", config)->required()->check(CLI::ExistingFile);
  sweep->add_option("--param", param, "Dotted config path, e.g. prior.terms.0.points")->required();
  sweep->add_option("--values", values, "Comma-separated TOML literals")->required();
  sweep->add_option("--seed", seed, "Override the config seed");
  sweep->add_option("--output-root", output_root, "Output root");

  CLI11_PARSE(app, argc, argv);

  ocbnn::RunOverrides overrides;
  overrides.seed = seed;
  overrides.output_root = output_root;
  try {
    if (*run) {
      print_metrics(ocbnn::run_experiment(config, overrides));
    } else if (*compare) {
      std::cout << ocbnn::compare_runs(dir_a, dir_b, metric);
    } else if (*sweep) {
      for (const auto& p : ocbnn::run_sweep(config, param, split_list(values), overrides)) {
        std::cout << param << " = " << p.value << "\n";
        print_metrics(p.result);
      }
    }
  } catch (const std::exception& e) {
    const auto [kind, status] = classify(e);
    std::cerr << nlohmann::json{{"error", kind}, {"message", e.what()}}.dump() << "\n";
    return status;
  }
  return 0;
}
