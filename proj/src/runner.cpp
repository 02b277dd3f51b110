#include "omniisr/runner.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "omniisr/errors.hpp"
#include "omniisr/fedsim.hpp"
#include "omniisr/graph.hpp"
#include "omniisr/hybrid.hpp"
#include "omniisr/isr.hpp"
#include "omniisr/rng.hpp"
#include "omniisr/theory.hpp"

#ifndef OMNIISR_VERSION
#define OMNIISR_VERSION "0.0.0"
#endif

namespace omniisr {

namespace {

namespace fs = std::filesystem;

// Collects the files a command writes, relative to its output directory.
class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const CsvTable& table) {
    table.write(dir_ / name);
    files_.push_back(name);
  }
  const fs::path& dir() const { return dir_; }
  std::vector<std::string> files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

std::size_t argmax_class(const Tensor& probs, std::size_t b, std::size_t cell, std::size_t classes,
                         std::size_t cells) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < classes; ++k) {
    if (probs[(b * classes + k) * cells + cell] > probs[(b * classes + best) * cells + cell]) best = k;
  }
  return best;
}

// Trains one configured run and writes its CSVs with `prefix`. Returns the
// final parameters.
ParamSet train_run(const RunConfig& cfg, const TapPlan& plan, const TaskData& data,
                   std::uint64_t seed, Output& out, const std::string& prefix, std::ostream& log) {
  switch (cfg.mode) {
    case RunMode::cl: {
      auto result = train_cl(cfg.network, plan, data.train, cfg.optimizer, seed);
      out.write(prefix + "trace.csv", trace_table(result.trace, plan.count()));
      log << "train-cl: " << result.trace.size() << " iterations, final loss "
          << format_number(result.trace.back().loss.total) << "\n";
      return result.params;
    }
    case RunMode::fl: {
      auto result = train_fl(cfg.network, plan, data.train, *cfg.fed, cfg.optimizer, seed);
      out.write(prefix + "rounds.csv", rounds_table(result.rounds));
      log << "train-fl: " << result.rounds.size() << " rounds\n";
      return result.params;
    }
    case RunMode::hybrid: {
      auto result = train_hybrid(cfg.network, plan, data.cloud, data.device, *cfg.fed, cfg.hybrid,
                                 cfg.optimizer, seed);
      std::vector<RoundDiagnostics> fed;
      for (const auto& r : result.rounds) fed.push_back(r.fed);
      out.write(prefix + "alignment.csv", alignment_table(result.rounds));
      out.write(prefix + "rounds.csv", rounds_table(fed));
      log << "train-hybrid: " << result.rounds.size() << " rounds\n";
      return result.params;
    }
  }
  throw ContractViolation("unhandled run mode");
}

void run_training(RunConfig& cfg, RunMode mode, std::uint64_t seed, Output& out, std::ostream& log) {
  cfg.mode = mode;
  cfg.validate();
  const TapPlan plan = cfg.taps.resolve(cfg.network.depth());
  const TaskData data = make_task_data(cfg, seed);
  const ParamSet params = train_run(cfg, plan, data, seed, out, "", log);
  const auto metrics = evaluate_metrics(cfg.network, plan, params, data);
  out.write("metrics.csv", metrics_table(metrics));
  log << metrics.split << " accuracy " << format_number(metrics.accuracy) << "\n";
}

void run_bounds(const RunConfig& cfg, Output& out, std::ostream& log) {
  TheoryInputs in = cfg.theory.inputs;
  if (!cfg.theory.alphas.empty()) {
    const auto q = effective_quantities(in, cfg.theory.alphas);
    in.bias_eff = q.bias;
    in.variance_eff = q.variance;
    in.alpha_min = q.alpha_min;
  }
  const FlBoundOptions fl{cfg.theory.suppress_gradient_term, cfg.theory.kappa};
  const std::vector<BoundReport> reports{bound_cl(in), bound_fl(in, fl), bound_hybrid(in)};
  const std::vector<Complexity> counts{complexity(BoundMode::cl, in, cfg.theory.epsilon),
                                       complexity(BoundMode::fl, in, cfg.theory.epsilon, fl),
                                       complexity(BoundMode::hybrid, in, cfg.theory.epsilon)};
  out.write("bounds.csv", bounds_table(reports, counts));
  log << format_reports(reports);
}

void run_escape_sweep(const RunConfig& cfg, Output& out, std::ostream& log) {
  const auto rows = escape_sweep(cfg.escape.sweep());
  out.write("escape_sweep.csv", escape_table(rows));
  const auto shapes = escape_shapes(rows);
  log << "decreasing in curvature: " << (shapes.decreasing_in_curvature ? "yes" : "no") << "\n";
  for (const auto& [g, found] : shapes.interior_eta_minimum)
    log << "gamma " << format_number(g) << ": interior eta minimum " << (found ? "yes" : "no") << "\n";
}

void run_saddle(const RunConfig& cfg, std::uint64_t seed, Output& out, std::ostream& log) {
  const auto& s = cfg.saddle;
  SaddleConfig base;
  base.curvature = s.curvature;
  base.eta = s.eta;
  base.initial_offset = s.initial_offset;
  base.radius = s.radius;
  base.bias = s.bias;
  base.trials = s.trials;
  base.max_steps = s.max_steps;
  base.seed = seed;
  base.parallel = s.parallel;

  // Source 0 is the cloud draw in every configuration, so runs are paired.
  const std::vector<std::pair<std::string, std::vector<NoiseSource>>> configs{
      {"cloud", {{1.0, s.sigma_cloud}}},
      {"device", {{0.0, 0.0}, {1.0, s.sigma_device}}},
      {"hybrid", {{s.alpha, s.sigma_cloud}, {1.0 - s.alpha, s.sigma_device}}},
  };
  CsvTable table({"config", "sigma_eff", "trials", "censored", "median", "quantile",
                  "bound", "escape_constant"});
  std::optional<double> constant;
  for (const auto& [name, noise] : configs) {
    SaddleConfig c = base;
    c.noise = noise;
    const auto result = saddle_sim(c);
    const auto q = result.quantile(1.0 - s.delta);
    // The escape constant is fitted once, on the cloud configuration.
    if (name == "cloud" && q) constant = calibrate_escape_constant(c, s.delta, *q);
    std::optional<double> bound;
    if (constant) bound = escape_time(escape_inputs_for(c, s.delta, *constant));
    auto cell = [](const std::optional<double>& v) {
      return v ? format_number(*v) : std::string(kUndefined);
    };
    table.add({name, format_number(c.effective_sigma()), std::to_string(result.trials),
               std::to_string(result.censored), cell(result.median()), cell(q), cell(bound),
               cell(constant)});
    log << name << ": median " << cell(result.median()) << ", censored " << result.censored << "\n";
  }
  out.write("saddle.csv", table);
}

void run_grad_check(const RunConfig& cfg, std::uint64_t seed, Output& out, std::ostream& log,
                    CommandResult& result) {
  const TapPlan plan = cfg.taps.resolve(cfg.network.depth());
  const TaskData data = make_task_data(cfg, seed);
  IsrModel model(cfg.network, plan);
  // Zero-initialised biases can leave pre-activations exactly on a ReLU kink
  // when a whole layer is inactive for a sample, so every entry is jittered.
  ParamSet params = init_params(cfg.network, plan, seed);
  Rng rng = make_rng(seed, Stream::probe);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& [name, entry] : params)
    for (double& v : entry.value.values()) v += jitter(rng);
  model.load(params);
  std::vector<std::size_t> idx(std::min<std::size_t>(8, data.train.size()));
  std::iota(idx.begin(), idx.end(), 0);
  model.evaluate(data.train.gather(idx));
  const auto report = grad_check(model.graph(), model.total_node(), {.step = 1e-5});
  CsvTable table({"parameter", "index", "analytic", "numeric", "relative_error"});
  for (const auto& e : report.entries)
    table.add({e.parameter, std::to_string(e.index), format_number(e.analytic),
               format_number(e.numeric), format_number(e.relative_error)});
  out.write("gradcheck.csv", table);
  log << "max relative error " << format_number(report.max_relative_error) << " at "
      << report.worst_parameter << "\n";
  if (!report.passed) {
    result.status = exit_check_failed;
    result.message = "gradient check failed at " + report.worst_parameter;
  }
}

void run_ablate(RunConfig cfg, const CommandOptions& options, Output& out, std::ostream& log) {
  const AblationAxis axis = ablation_axis_from_string(options.axis);
  const auto values = parse_axis_values(axis, options.values);
  cfg.validate();

  CsvTable runs({"axis", "value", "seed", "split", "accuracy", "ce"});
  CsvTable summary({"axis", "value", "runs", "mean", "min", "max", "skipped"});
  for (const auto& value : values) {
    RunConfig run = cfg;
    TapPlan plan;
    try {
      switch (axis) {
        case AblationAxis::count: run.taps.count = std::stoul(value); break;
        case AblationAxis::spacing: run.taps.spacing = std::stoul(value); break;
        case AblationAxis::placement: run.taps.placement = placement_from_string(value); break;
      }
      plan = run.taps.resolve(run.network.depth());
    } catch (const ConfigError& e) {
      log << "ablate " << to_string(axis) << "=" << value << " skipped: " << e.what() << "\n";
      summary.add({to_string(axis), value, "0", kUndefined, kUndefined, kUndefined, "true"});
      continue;
    }
    std::vector<double> acc;
    for (std::uint64_t seed : cfg.ablate.seeds) {
      const std::string prefix =
          "runs/" + to_string(axis) + "-" + value + "-seed" + std::to_string(seed) + "/";
      const TaskData data = make_task_data(run, seed);
      const ParamSet params = train_run(run, plan, data, seed, out, prefix, log);
      const auto m = evaluate_metrics(run.network, plan, params, data);
      out.write(prefix + "metrics.csv", metrics_table(m));
      runs.add({to_string(axis), value, std::to_string(seed), m.split, format_number(m.accuracy),
                format_number(m.ce)});
      acc.push_back(m.accuracy);
    }
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    summary.add({to_string(axis), value, std::to_string(acc.size()), format_number(mean),
                 format_number(*std::min_element(acc.begin(), acc.end())),
                 format_number(*std::max_element(acc.begin(), acc.end())), "false"});
    log << "ablate " << to_string(axis) << "=" << value << ": mean accuracy " << format_number(mean)
        << "\n";
  }
  out.write("ablation_runs.csv", runs);
  out.write("ablation.csv", summary);
}

}  // namespace

TaskData make_task_data(const RunConfig& config, std::uint64_t seed) {
  const auto& net = config.network;
  const auto& d = config.data;
  const std::uint64_t data_seed = derive_seed(seed, Stream::data);
  Dataset all = d.kind == DataKind::classification
                    ? gen_classification(net.classes, net.input_channels, d.samples, d.separation,
                                         data_seed)
                    : gen_gridseg(net.classes, net.width, net.height, d.samples, data_seed,
                                  net.input_channels, d.noise);
  TaskData task;
  std::tie(task.train, task.test) = split(all, d.test_fraction, derive_seed(seed, Stream::data, 1));
  if (config.mode == RunMode::hybrid)
    std::tie(task.device, task.cloud) =
        split(task.train, d.cloud_fraction, derive_seed(seed, Stream::data, 2));
  return task;
}

TestMetrics evaluate_metrics(const NetworkSpec& spec, const TapPlan& plan, const ParamSet& params,
                             const TaskData& data) {
  TestMetrics m;
  const bool use_test = !data.test.empty();
  const Dataset& set = use_test ? data.test : data.train;
  m.split = use_test ? "test" : "train";
  m.samples = set.size();
  IsrModel model(spec, plan);
  model.load(params);
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Batch batch = set.gather(idx);
  m.ce = model.evaluate(batch).ce;
  const Tensor& probs = model.tapped().prediction;
  const std::size_t cells = set.cells();
  std::size_t correct = 0;
  for (std::size_t b = 0; b < set.size(); ++b)
    for (std::size_t c = 0; c < cells; ++c)
      if (argmax_class(probs, b, c, set.classes(), cells) == batch.labels[b * cells + c]) ++correct;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(set.size() * cells);
  return m;
}

CsvTable metrics_table(const TestMetrics& metrics) {
  CsvTable table({"split", "samples", "accuracy", "ce"});
  table.add({metrics.split, std::to_string(metrics.samples), format_number(metrics.accuracy),
             format_number(metrics.ce)});
  return table;
}

AblationAxis ablation_axis_from_string(const std::string& text) {
  if (text == "count") return AblationAxis::count;
  if (text == "spacing") return AblationAxis::spacing;
  if (text == "placement") return AblationAxis::placement;
  throw ConfigError("unknown ablation axis '" + text + "' (expected count|spacing|placement)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::count: return "count";
    case AblationAxis::spacing: return "spacing";
    case AblationAxis::placement: return "placement";
  }
  return "?";
}

std::vector<std::string> parse_axis_values(AblationAxis axis, const std::string& text) {
  std::vector<std::string> values;
  auto number = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("ablation value '" + s + "' is not a non-negative integer");
    return std::stoul(s);
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    if (axis == AblationAxis::placement) throw ConfigError("placement values cannot be a range");
    const std::size_t lo = number(text.substr(0, dots));
    const std::size_t hi = number(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("ablation range '" + text + "' is empty");
    for (std::size_t v = lo; v <= hi; ++v) values.push_back(std::to_string(v));
    return values;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (axis == AblationAxis::placement)
      placement_from_string(item);
    else
      item = std::to_string(number(item));
    values.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return values;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train-cl", "train-fl",   "train-hybrid",
                                              "bounds",   "escape-sweep", "saddle-sim",
                                              "ablate",   "grad-check"};
  return names;
}

CommandResult run_command(const std::string& command, RunConfig config,
                          const std::string& config_text, const CommandOptions& options,
                          std::ostream& log) {
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
    throw ConfigError("unknown command '" + command + "'");
  const std::uint64_t seed = resolve_seed(config, options.seed);
  Output out(options.out ? *options.out : fs::path(config.output));

  RunManifest manifest;
  manifest.command = command;
  manifest.config_sha256 = sha256_hex(config_text);
  manifest.seed = seed;
  manifest.version = OMNIISR_VERSION;
  manifest.started_utc = utc_now();

  CommandResult result;
  try {
    if (command == "train-cl")
      run_training(config, RunMode::cl, seed, out, log);
    else if (command == "train-fl")
      run_training(config, RunMode::fl, seed, out, log);
    else if (command == "train-hybrid")
      run_training(config, RunMode::hybrid, seed, out, log);
    else if (command == "bounds")
      run_bounds(config, out, log);
    else if (command == "escape-sweep")
      run_escape_sweep(config, out, log);
    else if (command == "saddle-sim")
      run_saddle(config, seed, out, log);
    else if (command == "ablate")
      run_ablate(config, options, out, log);
    else
      run_grad_check(config, seed, out, log, result);
  } catch (const TrainingAborted& e) {
    result.status = exit_training_aborted;
    result.message = e.what();
  }

  result.files = out.files();
  manifest.files = result.files;
  manifest.exit_status = result.status;
  manifest.message = result.message;
  manifest.finished_utc = utc_now();
  std::ofstream(out.dir() / "manifest.json", std::ios::binary) << manifest.to_json();
  return result;
}

}  // namespace omniisr
