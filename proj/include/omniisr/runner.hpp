#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "omniisr/config.hpp"
#include "omniisr/data.hpp"
#include "omniisr/report.hpp"

namespace omniisr {

/// Exit statuses of the command-line tool.
enum ExitStatus : int {
  exit_ok = 0,
  exit_config_error = 1,
  exit_training_aborted = 2,
  exit_check_failed = 3,
};

/// Datasets of one run. The cloud/device split exists for hybrid runs only.
struct TaskData {
  Dataset train;
  Dataset test;
  Dataset cloud;
  Dataset device;
};

/// Generates the configured task from the `data` stream of `seed` and splits it.
TaskData make_task_data(const RunConfig& config, std::uint64_t seed);

struct TestMetrics {
  std::string split;  // "test", or "train" when the test split is empty
  std::size_t samples = 0;
  double accuracy = 0.0;  // per-cell argmax accuracy
  double ce = 0.0;
};

TestMetrics evaluate_metrics(const NetworkSpec& spec, const TapPlan& plan, const ParamSet& params,
                             const TaskData& data);
CsvTable metrics_table(const TestMetrics& metrics);

enum class AblationAxis { count, spacing, placement };
AblationAxis ablation_axis_from_string(const std::string& text);
std::string to_string(AblationAxis axis);

/// "1..5" expands to 1,2,3,4,5; otherwise a comma-separated list.
std::vector<std::string> parse_axis_values(AblationAxis axis, const std::string& text);

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::string axis = "count";
  std::string values = "1..5";
};

struct CommandResult {
  int status = exit_ok;
  std::vector<std::string> files;  // relative to the output directory
  std::string message;
};

/// Runs one subcommand (train-cl, train-fl, train-hybrid, bounds,
/// escape-sweep, saddle-sim, ablate, grad-check) and writes its CSVs and
/// manifest.json under the output directory. `config_text` is hashed into the
/// manifest. Progress lines go to `log`. Configuration problems throw
/// ConfigError; a non-finite training loss returns exit_training_aborted.
CommandResult run_command(const std::string& command, RunConfig config,
                          const std::string& config_text, const CommandOptions& options,
                          std::ostream& log);

/// The subcommand names accepted by run_command.
const std::vector<std::string>& command_names();

}  // namespace omniisr
