#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omniisr/fedsim.hpp"
#include "omniisr/hybrid.hpp"
#include "omniisr/network.hpp"
#include "omniisr/theory.hpp"
#include "omniisr/trainer.hpp"

namespace omniisr {

enum class RunMode { cl, fl, hybrid };
std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& text);

/// Tap settings before they are resolved against the network depth.
struct TapSpec {
  std::size_t count = 2;
  Placement placement = Placement::input;
  std::size_t spacing = 1;
  /// One weight for every tap, or exactly `count` weights.
  std::vector<double> mi_weight{0.4};
  std::vector<double> ne_weight{0.1};

  TapPlan resolve(std::size_t depth) const;
  bool operator==(const TapSpec&) const = default;
};

enum class DataKind { classification, gridseg };

/// Synthetic task. Class count, channels and grid come from the network.
struct DataSpec {
  DataKind kind = DataKind::classification;
  std::size_t samples = 240;
  double separation = 1.5;  // classification cluster spacing
  double noise = 0.5;       // gridseg cell noise
  double test_fraction = 0.25;
  /// Hybrid mode: share of the training split held by the cloud.
  double cloud_fraction = 0.3;

  bool operator==(const DataSpec&) const = default;
};

struct EscapeSpec {
  double initial_offset = 0.5;
  double sigma = 0.1;
  double bias = 0.0;
  double radius = 10.0;
  double delta = 0.1;
  double escape_constant = 1.0;
  double panel_eta = 0.01;
  std::vector<double> curvatures{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  double eta_min = 1e-3;
  double eta_max = 1.0;
  std::size_t eta_points = 61;
  std::vector<double> radii{1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0};
  double delta_min = 1e-3;
  double delta_max = 0.5;
  std::size_t delta_points = 25;

  EscapeSweepConfig sweep() const;
  bool operator==(const EscapeSpec&) const = default;
};

/// Three paired testbed configurations share these settings: cloud noise
/// alone, device noise alone, and the alpha-weighted mix of both.
struct SaddleSpec {
  double curvature = 0.1;
  double eta = 0.01;
  double initial_offset = 0.01;
  double radius = 10.0;
  double bias = 0.0;
  double sigma_cloud = 0.1;
  double sigma_device = 0.3;
  double alpha = 0.5;
  std::size_t trials = 1000;
  std::size_t max_steps = 1'000'000;
  double delta = 0.1;
  bool parallel = false;

  bool operator==(const SaddleSpec&) const = default;
};

struct AblateSpec {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool operator==(const AblateSpec&) const = default;
};

/// Theory inputs plus the bounds-command extras.
struct TheorySpec {
  TheoryInputs inputs;
  double epsilon = 0.1;
  double kappa = 1.0;
  bool suppress_gradient_term = false;
  /// When nonempty, the hybrid bias and variance are derived from the
  /// per-source values over this alpha sequence.
  std::vector<double> alphas;

  bool operator==(const TheorySpec&) const = default;
};

struct RunConfig {
  RunMode mode = RunMode::cl;
  std::optional<std::uint64_t> seed;
  std::string output = "out";
  NetworkSpec network;
  TapSpec taps;
  OptimizerConfig optimizer;
  /// Required for fl and hybrid runs.
  std::optional<FedConfig> fed;
  HybridSchedule hybrid;
  TheorySpec theory;
  DataSpec data;
  EscapeSpec escape;
  SaddleSpec saddle;
  AblateSpec ablate;

  /// Checks every section, including mode-required ones. Throws ConfigError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses TOML text. Unknown keys, wrong types and invariant violations throw
/// ConfigError naming the key and, where known, its line.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "config");
RunConfig parse_config(const std::filesystem::path& path);

/// TOML text that parses back to an equal RunConfig.
std::string serialize_config(const RunConfig& config);

/// Seed precedence: explicit override, then the config, then the
/// OMNIISR_SEED environment variable, then 0.
std::uint64_t resolve_seed(const RunConfig& config, std::optional<std::uint64_t> override_seed);

}  // namespace omniisr
