#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "omniisr/config.hpp"
#include "omniisr/errors.hpp"
#include "omniisr/runner.hpp"

using namespace omniisr;

int main(int argc, char** argv) {
  CLI::App app{"Intermediate supervision and regularization lab: training, bounds and sweeps"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  CommandOptions options;

  const std::map<std::string, std::string> help{
      {"train-cl", "centralized training; writes trace.csv, metrics.csv"},
      {"train-fl", "federated training; writes rounds.csv, metrics.csv"},
      {"train-hybrid", "cloud/device mixed training; writes alignment.csv, rounds.csv, metrics.csv"},
      {"bounds", "closed-form convergence bounds; writes bounds.csv"},
      {"escape-sweep", "closed-form saddle escape times; writes escape_sweep.csv"},
      {"saddle-sim", "Monte-Carlo saddle escape; writes saddle.csv"},
      {"ablate", "repeat training over a tap setting and seeds; writes ablation.csv"},
      {"grad-check", "finite-difference gradient check; writes gradcheck.csv"},
  };

  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "TOML run configuration");
    sub->add_option("--seed", seed, "master seed (overrides config and OMNIISR_SEED)");
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    if (name == "ablate") {
      sub->add_option("--axis", options.axis, "count | spacing | placement")->capture_default_str();
      sub->add_option("--values", options.values, "range like 1..5 or a comma list")
          ->capture_default_str();
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? exit_ok : exit_config_error;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  options.seed = seed;
  if (!out_dir.empty()) options.out = out_dir;

  try {
    RunConfig config;
    std::string text;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
      std::ostringstream buffer;
      buffer << in.rdbuf();
      text = buffer.str();
      config = parse_config_text(text, config_path);
    } else {
      text = serialize_config(config);
    }
    const auto result = run_command(command, config, text, options, std::cerr);
    if (result.status != exit_ok) std::cerr << "omniisr: " << result.message << "\n";
    return result.status;
  } catch (const ConfigError& e) {
    std::cerr << "omniisr: configuration error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const DomainError& e) {
    std::cerr << "omniisr: configuration error: " << e.what() << "\n";
    return exit_config_error;
  }
}
