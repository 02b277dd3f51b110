#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "omniisr/config.hpp"
#include "omniisr/errors.hpp"
#include "omniisr/report.hpp"
#include "omniisr/rng.hpp"
#include "omniisr/runner.hpp"

using namespace omniisr;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("omniisr_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text, "t.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunConfig quick_config() {
  RunConfig c;
  c.network.widths = {6, 6, 6};
  c.network.input_channels = 4;
  c.network.classes = 3;
  c.taps.count = 1;
  c.data.samples = 60;
  c.optimizer.iterations = 10;
  c.optimizer.batch_size = 8;
  c.fed = FedConfig{.clients = 3, .rounds = 3};
  c.saddle.trials = 100;
  c.saddle.max_steps = 20000;
  return c;
}

CommandResult run(const std::string& command, const RunConfig& c, const fs::path& out,
                  CommandOptions options = {}) {
  std::ostringstream log;
  options.out = out;
  return run_command(command, c, serialize_config(c), options, log);
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  auto c = parse_config_text("mode = \"cl\"\n");
  CHECK(c.mode == RunMode::cl);
  CHECK(c.taps.count == 2);
  auto plan = c.taps.resolve(c.network.depth());
  CHECK(plan.alpha == std::vector<double>{0.4, 0.4});
  CHECK(plan.lambda == std::vector<double>{0.1, 0.1});
  CHECK_FALSE(c.fed);
  CHECK(FedConfig{}.partition == PartitionKind::dirichlet);
  CHECK(FedConfig{}.concentration == 0.3);
  CHECK_FALSE(c.seed);
}

TEST_CASE("config errors name the key and line") {
  auto e = error_of("mode = \"hybrid\"\n");
  CHECK(e.find("fed") != std::string::npos);

  e = error_of("mode = \"cl\"\n\n[optimizer]\neta = 0.1\nbogus = 1\n");
  CHECK(e.find("optimizer.bogus") != std::string::npos);
  CHECK(e.find("t.toml:5") != std::string::npos);

  e = error_of("mode = \"cl\"\nextra = true\n");
  CHECK(e.find("'extra'") != std::string::npos);

  e = error_of("[taps]\nplacement = \"sideways\"\n");
  CHECK(e.find("taps.placement") != std::string::npos);
  CHECK(e.find("t.toml:2") != std::string::npos);

  e = error_of("[optimizer]\niterations = \"many\"\n");
  CHECK(e.find("optimizer.iterations") != std::string::npos);

  e = error_of("[network]\nwidths = [4, 4, 4]\n[taps]\ncount = 3\n");
  CHECK(e.find("taps") != std::string::npos);

  e = error_of("mode = \"cl\"\n[fed\n");
  CHECK(e.find("t.toml:2") != std::string::npos);

  CHECK_THROWS_AS(parse_config("/nonexistent/c.toml"), ConfigError);
}

TEST_CASE("property: parse, serialize and parse again round-trips") {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    RunConfig c;
    c.mode = static_cast<RunMode>(pick(rng));
    if (trial % 3) c.seed = rng() >> 1;  // TOML integers are signed 64-bit
    c.output = "runs/t" + std::to_string(trial);
    c.network.widths = {4 + std::size_t(pick(rng)), 5, 6, 7, 8};
    c.taps.count = 1 + std::size_t(pick(rng));
    c.taps.placement = static_cast<Placement>(pick(rng));
    c.taps.mi_weight = trial % 2 ? std::vector<double>{u(rng)}
                                 : std::vector<double>(c.taps.count, u(rng) / 3.0);
    c.taps.ne_weight = {u(rng) * 1e-3};
    c.optimizer.kind = trial % 2 ? OptimizerKind::adam : OptimizerKind::sgd;
    c.optimizer.base_eta = u(rng);
    if (trial % 4 == 0) c.optimizer.weight_decay = u(rng) * 1e-3;
    if (c.mode != RunMode::cl || trial % 5 == 0) {
      c.fed = FedConfig{.clients = 2 + std::size_t(pick(rng)), .participation = 0.5 + u(rng) / 2,
                        .partition = static_cast<PartitionKind>(pick(rng)),
                        .concentration = 0.1 + u(rng)};
    }
    c.hybrid = HybridSchedule::adaptive(u(rng), u(rng), 0.0);
    c.theory.inputs.heterogeneity = u(rng) * 100;
    c.theory.inputs.delta = 0.01 + u(rng) * 0.9;
    c.theory.alphas = trial % 2 ? std::vector<double>{} : std::vector<double>{u(rng), u(rng)};
    c.data.separation = u(rng) * 3;
    c.escape.curvatures = {0.1 + u(rng)};
    c.saddle.sigma_device = u(rng);
    c.ablate.seeds = {rng() >> 2, 5};
    c.validate();

    const std::string text = serialize_config(c);
    const RunConfig back = parse_config_text(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
  }
}

TEST_CASE("seed precedence") {
  RunConfig c;
  ::unsetenv("OMNIISR_SEED");
  CHECK(resolve_seed(c, std::nullopt) == 0);
  ::setenv("OMNIISR_SEED", "77", 1);
  CHECK(resolve_seed(c, std::nullopt) == 77);
  c.seed = 5;
  CHECK(resolve_seed(c, std::nullopt) == 5);
  CHECK(resolve_seed(c, 9) == 9);
  c.seed.reset();
  ::setenv("OMNIISR_SEED", "x1", 1);
  CHECK_THROWS_AS(resolve_seed(c, std::nullopt), ConfigError);
  ::unsetenv("OMNIISR_SEED");
}

TEST_CASE("config hash depends only on the text") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("train commands write documented CSV headers and a manifest") {
  auto c = quick_config();
  const auto dir = scratch("train");
  auto r = run("train-cl", c, dir / "cl");
  CHECK(r.status == exit_ok);
  CHECK(first_line(dir / "cl" / "trace.csv") == "iter,ce,mi_1,ne_1,total,grad_norm_sq,eta");
  CHECK(first_line(dir / "cl" / "metrics.csv") == "split,samples,accuracy,ce");
  CHECK(fs::exists(dir / "cl" / "manifest.json"));
  const auto manifest = read_file(dir / "cl" / "manifest.json");
  CHECK(manifest.find(sha256_hex(serialize_config(c))) != std::string::npos);
  CHECK(manifest.find("trace.csv") != std::string::npos);

  r = run("train-fl", c, dir / "fl");
  CHECK(r.status == exit_ok);
  CHECK(first_line(dir / "fl" / "rounds.csv") ==
        "round,drift,H_t,grad_norm_sq,mean_client_loss,participants");

  r = run("train-hybrid", c, dir / "hy");
  CHECK(r.status == exit_ok);
  CHECK(first_line(dir / "hy" / "alignment.csv") == "round,inner,norm_cl,norm_fl,cosine,alpha");

  r = run("bounds", c, dir / "b");
  CHECK(first_line(dir / "b" / "bounds.csv") ==
        "mode,initial_gap,variance,drift,bias_floor,total,feasible,condition,rounds_to_epsilon");
  r = run("escape-sweep", c, dir / "e");
  CHECK(first_line(dir / "e" / "escape_sweep.csv") == "panel,gamma,eta,R,delta,t_esc");
  r = run("saddle-sim", c, dir / "s");
  CHECK(first_line(dir / "s" / "saddle.csv") ==
        "config,sigma_eff,trials,censored,median,quantile,bound,escape_constant");
  r = run("grad-check", c, dir / "g");
  CHECK(r.status == exit_ok);
  CHECK(first_line(dir / "g" / "gradcheck.csv") == "parameter,index,analytic,numeric,relative_error");
}

TEST_CASE("identical config and seed give byte-identical CSV bodies") {
  auto c = quick_config();
  const auto dir = scratch("determinism");
  for (const char* command : {"train-cl", "train-fl", "train-hybrid", "saddle-sim"}) {
    CommandOptions opt;
    opt.seed = 11;
    auto a = run(command, c, dir / "a", opt);
    auto b = run(command, c, dir / "b", opt);
    REQUIRE(a.files == b.files);
    for (const auto& f : a.files) CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }
}

TEST_CASE("training abort maps to exit status 2") {
  auto c = quick_config();
  c.optimizer.base_eta = 1e200;
  const auto dir = scratch("abort");
  auto r = run("train-cl", c, dir);
  CHECK(r.status == exit_training_aborted);
  CHECK(read_file(dir / "manifest.json").find("\"exit_status\": 2") != std::string::npos);
}

TEST_CASE("ablation orchestration") {
  auto c = quick_config();
  c.network.widths = {6, 6, 6, 6};
  c.ablate.seeds = {1, 2};
  const auto dir = scratch("ablate");
  CommandOptions opt;
  opt.axis = "count";
  opt.values = "1..4";
  auto r = run("ablate", c, dir, opt);
  CHECK(r.status == exit_ok);
  // counts 1..3 run twice each; count 4 needs M < D and is skipped
  std::size_t metric_files = 0;
  for (const auto& f : r.files)
    if (f.ends_with("metrics.csv")) ++metric_files;
  CHECK(metric_files == 6);
  const auto summary = read_file(dir / "ablation.csv");
  CHECK(first_line(dir / "ablation.csv") == "axis,value,runs,mean,min,max,skipped");
  CHECK(summary.find("count,4,0,undefined,undefined,undefined,true") != std::string::npos);
  CHECK(summary.find("count,1,2,") != std::string::npos);

  // Placement arms share the seed list.
  opt.axis = "placement";
  opt.values = "input,middle,output";
  c.taps.count = 1;
  const auto pdir = scratch("ablate_place");
  r = run("ablate", c, pdir, opt);
  const auto runs = read_file(pdir / "ablation_runs.csv");
  for (const char* arm : {"input", "middle", "output"}) {
    CHECK(runs.find(std::string("placement,") + arm + ",1,") != std::string::npos);
    CHECK(runs.find(std::string("placement,") + arm + ",2,") != std::string::npos);
  }

  // Spacing that pushes a tap past D - 1 is skipped rather than fatal.
  c.network.widths = std::vector<std::size_t>(10, 4);
  c.taps.count = 3;
  c.ablate.seeds = {1};
  opt.axis = "spacing";
  opt.values = "4,5";
  const auto sdir = scratch("ablate_spacing");
  r = run("ablate", c, sdir, opt);
  const auto s = read_file(sdir / "ablation.csv");
  CHECK(s.find("spacing,4,1,") != std::string::npos);
  CHECK(s.find("spacing,5,0,undefined,undefined,undefined,true") != std::string::npos);
}

TEST_CASE("ablation value lists") {
  CHECK(parse_axis_values(AblationAxis::count, "1..3") == std::vector<std::string>{"1", "2", "3"});
  CHECK(parse_axis_values(AblationAxis::spacing, "1,2") == std::vector<std::string>{"1", "2"});
  CHECK_THROWS_AS(parse_axis_values(AblationAxis::count, "a"), ConfigError);
  CHECK_THROWS_AS(parse_axis_values(AblationAxis::placement, "left"), ConfigError);
  CHECK_THROWS_AS(ablation_axis_from_string("depth"), ConfigError);
  CHECK_THROWS_AS(run_command("train", RunConfig{}, "", {}, std::cerr), ConfigError);
}

TEST_CASE("CSV rows must match the header width") {
  CsvTable t({"a", "b"});
  t.add({"1", "2"});
  CHECK(t.str() == "a,b\n1,2\n");
  CHECK_THROWS_AS(t.add({"1"}), ContractViolation);
  CHECK(format_number(0.1) == "0.10000000000000001");
}
