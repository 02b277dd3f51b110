#include "omniisr/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "omniisr/errors.hpp"

namespace omniisr {

namespace {

std::string where(const std::string& origin, const toml::node* node) {
  if (node && node->source().begin.line > 0)
    return origin + ":" + std::to_string(node->source().begin.line);
  return origin;
}

// Reads keys of one table and remembers which were consumed, so leftovers can
// be reported as unknown.
class Section {
 public:
  Section(const toml::table* table, std::string prefix, const std::string& origin)
      : table_(table), prefix_(std::move(prefix)), origin_(origin) {}

  bool present() const { return table_ != nullptr; }

  const toml::node* node(const std::string& key) {
    used_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  [[noreturn]] void fail(const std::string& key, const toml::node* n, const std::string& what) const {
    throw ConfigError(where(origin_, n ? n : table_) + ": key '" + name(key) + "' " + what);
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void read(const std::string& key, double& out) {
    if (const auto* n = node(key)) {
      if (n->is_floating_point())
        out = n->as_floating_point()->get();
      else if (n->is_integer())
        out = static_cast<double>(n->as_integer()->get());
      else
        fail(key, n, "must be a number");
    }
  }

  void read(const std::string& key, std::optional<double>& out) {
    if (table_ && table_->get(key)) {
      double v = 0.0;
      read(key, v);
      out = v;
    } else {
      used_.insert(key);
    }
  }

  void read(const std::string& key, std::int64_t& out) {
    if (const auto* n = node(key)) {
      if (!n->is_integer()) fail(key, n, "must be an integer");
      out = n->as_integer()->get();
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (const auto* n = node(key)) {
      if (!n->is_integer() || n->as_integer()->get() < 0) fail(key, n, "must be a non-negative integer");
      out = static_cast<std::size_t>(n->as_integer()->get());
    }
  }

  void read(const std::string& key, bool& out) {
    if (const auto* n = node(key)) {
      if (!n->is_boolean()) fail(key, n, "must be true or false");
      out = n->as_boolean()->get();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const auto* n = node(key)) {
      if (!n->is_string()) fail(key, n, "must be a string");
      out = n->as_string()->get();
    }
  }

  // A number or an array of numbers.
  void read(const std::string& key, std::vector<double>& out) {
    const auto* n = node(key);
    if (!n) return;
    if (n->is_number()) {
      double v = 0.0;
      read(key, v);
      out = {v};
      return;
    }
    if (!n->is_array()) fail(key, n, "must be a number or an array of numbers");
    out.clear();
    for (const auto& item : *n->as_array()) {
      if (item.is_floating_point())
        out.push_back(item.as_floating_point()->get());
      else if (item.is_integer())
        out.push_back(static_cast<double>(item.as_integer()->get()));
      else
        fail(key, &item, "must contain only numbers");
    }
  }

  template <class Int>
  void read_ints(const std::string& key, std::vector<Int>& out) {
    const auto* n = node(key);
    if (!n) return;
    if (!n->is_array()) fail(key, n, "must be an array of non-negative integers");
    out.clear();
    for (const auto& item : *n->as_array()) {
      if (!item.is_integer() || item.as_integer()->get() < 0)
        fail(key, &item, "must contain only non-negative integers");
      out.push_back(static_cast<Int>(item.as_integer()->get()));
    }
  }

  template <class Enum, class Parse>
  void read_enum(const std::string& key, Enum& out, Parse parse) {
    const auto* n = node(key);
    if (!n) return;
    if (!n->is_string()) fail(key, n, "must be a string");
    try {
      out = parse(n->as_string()->get());
    } catch (const ConfigError& e) {
      fail(key, n, std::string("is invalid: ") + e.what());
    }
  }

  // Runs a validator and prefixes its message with the section location.
  template <class F>
  void check(F&& validator) const {
    try {
      validator();
    } catch (const ConfigError& e) {
      throw ConfigError(where(origin_, table_) + ": [" + prefix_ + "] " + e.what());
    }
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, value] : *table_) {
      if (!used_.count(std::string(key.str())))
        throw ConfigError(where(origin_, &value) + ": unknown key '" + name(std::string(key.str())) + "'");
    }
  }

 private:
  const toml::table* table_;
  std::string prefix_;
  const std::string& origin_;
  std::set<std::string> used_;
};

const toml::table* subtable(const toml::table& root, const std::string& name, const std::string& origin) {
  const auto* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) throw ConfigError(where(origin, n) + ": '" + name + "' must be a table");
  return n->as_table();
}

DataKind data_kind_from_string(const std::string& text) {
  if (text == "classification") return DataKind::classification;
  if (text == "gridseg") return DataKind::gridseg;
  throw ConfigError("unknown data kind '" + text + "' (expected classification|gridseg)");
}

std::string to_string(DataKind kind) { return kind == DataKind::gridseg ? "gridseg" : "classification"; }

OptimizerKind optimizer_from_string(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + text + "' (expected sgd|adam)");
}

StepSchedule schedule_from_string(const std::string& text) {
  if (text == "constant") return StepSchedule::constant;
  if (text == "inverse_sqrt_t") return StepSchedule::inverse_sqrt_t;
  throw ConfigError("unknown schedule '" + text + "' (expected constant|inverse_sqrt_t)");
}

// Theory input keys, shared by the parser and the serializer.
const std::pair<const char*, double TheoryInputs::*> kTheoryFields[] = {
    {"smoothness", &TheoryInputs::smoothness},
    {"grad_bound_sq", &TheoryInputs::grad_bound_sq},
    {"variance", &TheoryInputs::variance},
    {"initial_gap", &TheoryInputs::initial_gap},
    {"eta", &TheoryInputs::eta},
    {"iterations", &TheoryInputs::iterations},
    {"local_epochs", &TheoryInputs::local_epochs},
    {"heterogeneity", &TheoryInputs::heterogeneity},
    {"drift_constant", &TheoryInputs::drift_constant},
    {"bound_constant", &TheoryInputs::bound_constant},
    {"bias_cl", &TheoryInputs::bias_cl},
    {"bias_fl", &TheoryInputs::bias_fl},
    {"variance_cl", &TheoryInputs::variance_cl},
    {"variance_fl", &TheoryInputs::variance_fl},
    {"alpha_min", &TheoryInputs::alpha_min},
    {"bias_eff", &TheoryInputs::bias_eff},
    {"variance_eff", &TheoryInputs::variance_eff},
    {"curvature", &TheoryInputs::curvature},
    {"hessian_lipschitz", &TheoryInputs::hessian_lipschitz},
    {"initial_offset", &TheoryInputs::initial_offset},
    {"escape_constant", &TheoryInputs::escape_constant},
    {"radius", &TheoryInputs::radius},
    {"delta", &TheoryInputs::delta},
};

void validate_data(const DataSpec& d, const NetworkSpec& net) {
  if (d.samples < net.classes) throw ConfigError("data.samples must be at least the class count");
  if (!(d.test_fraction >= 0.0 && d.test_fraction < 1.0))
    throw ConfigError("data.test_fraction must lie in [0, 1)");
  if (!(d.cloud_fraction > 0.0 && d.cloud_fraction < 1.0))
    throw ConfigError("data.cloud_fraction must lie in (0, 1)");
  if (!(d.separation >= 0.0) || !(d.noise >= 0.0))
    throw ConfigError("data.separation and data.noise must be non-negative");
  if (d.kind == DataKind::classification && !net.is_classification())
    throw ConfigError("classification data needs a 1x1 network grid");
  if (d.kind == DataKind::gridseg && net.height * net.width < net.classes)
    throw ConfigError("gridseg data needs at least as many cells as classes");
}

void validate_escape(const EscapeSpec& e) {
  if (e.curvatures.empty() || e.radii.empty() || e.eta_points == 0 || e.delta_points == 0)
    throw ConfigError("escape grids must be nonempty");
  for (double g : e.curvatures)
    if (!(g > 0.0)) throw ConfigError("escape.curvatures must be positive");
  for (double r : e.radii)
    if (!(r > 0.0)) throw ConfigError("escape.radii must be positive");
  if (!(e.eta_min > 0.0 && e.eta_max >= e.eta_min)) throw ConfigError("escape eta range is invalid");
  if (!(e.delta_min > 0.0 && e.delta_max >= e.delta_min && e.delta_max < 1.0))
    throw ConfigError("escape delta range must lie in (0, 1)");
  if (!(e.delta > 0.0 && e.delta < 1.0)) throw ConfigError("escape.delta must lie in (0, 1)");
  if (!(e.panel_eta > 0.0)) throw ConfigError("escape.panel_eta must be positive");
  if (!(e.sigma >= 0.0) || !(e.bias >= 0.0) || !(e.escape_constant > 0.0))
    throw ConfigError("escape noise, bias and constant must be non-negative");
}

void validate_saddle(const SaddleSpec& s) {
  if (s.trials < 100) throw ConfigError("saddle.trials must be at least 100");
  if (!(s.curvature > 0.0) || !(s.eta > 0.0) || !(s.radius > 0.0))
    throw ConfigError("saddle curvature, eta and radius must be positive");
  if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw ConfigError("saddle.alpha must lie in [0, 1]");
  if (!(s.delta > 0.0 && s.delta < 1.0)) throw ConfigError("saddle.delta must lie in (0, 1)");
  if (!(s.sigma_cloud >= 0.0) || !(s.sigma_device >= 0.0))
    throw ConfigError("saddle noise levels must be non-negative");
  if (s.max_steps == 0) throw ConfigError("saddle.max_steps must be positive");
}

void validate_theory(const TheorySpec& t) {
  t.inputs.validate();
  if (!(t.epsilon > 0.0)) throw ConfigError("theory.epsilon must be positive");
  if (!(t.kappa >= 0.0)) throw ConfigError("theory.kappa must be non-negative");
  for (double a : t.alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("theory.alphas must lie in [0, 1]");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <class T>
std::string list(const std::vector<T>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt(values[i]);
    else
      out += std::to_string(values[i]);
  }
  return out + "]";
}

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::cl: return "cl";
    case RunMode::fl: return "fl";
    case RunMode::hybrid: return "hybrid";
  }
  return "?";
}

RunMode run_mode_from_string(const std::string& text) {
  if (text == "cl") return RunMode::cl;
  if (text == "fl") return RunMode::fl;
  if (text == "hybrid") return RunMode::hybrid;
  throw ConfigError("unknown mode '" + text + "' (expected cl|fl|hybrid)");
}

TapPlan TapSpec::resolve(std::size_t depth) const {
  auto expand = [&](const std::vector<double>& w, const char* key) {
    if (w.size() == 1) return std::vector<double>(count, w[0]);
    if (w.size() == count) return w;
    throw ConfigError(std::string("taps.") + key + " needs 1 or " + std::to_string(count) + " values");
  };
  TapPlan plan;
  plan.indices = plan_taps(depth, count, placement, spacing);
  plan.alpha = expand(mi_weight, "mi_weight");
  plan.lambda = expand(ne_weight, "ne_weight");
  plan.placement = placement;
  plan.spacing = spacing;
  plan.validate(depth);
  return plan;
}

EscapeSweepConfig EscapeSpec::sweep() const {
  EscapeSweepConfig cfg;
  cfg.base = default_escape_inputs();
  cfg.base.initial_offset = initial_offset;
  cfg.base.variance_eff = sigma * sigma;
  cfg.base.bias_eff = bias;
  cfg.base.radius = radius;
  cfg.base.delta = delta;
  cfg.base.escape_constant = escape_constant;
  cfg.curvatures = curvatures;
  cfg.etas = log_grid(eta_min, eta_max, eta_points);
  cfg.radii = radii;
  cfg.deltas = log_grid(delta_min, delta_max, delta_points);
  cfg.panel_eta = panel_eta;
  return cfg;
}

void RunConfig::validate() const {
  network.validate();
  taps.resolve(network.depth());
  optimizer.validate();
  if (mode != RunMode::cl && !fed)
    throw ConfigError("mode '" + to_string(mode) + "' requires a [fed] section");
  if (fed) fed->validate();
  hybrid.validate();
  validate_theory(theory);
  validate_data(data, network);
  validate_escape(escape);
  validate_saddle(saddle);
  if (ablate.seeds.empty()) throw ConfigError("ablate.seeds must be nonempty");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.source().begin.line) + ": " +
                      std::string(e.description()));
  }

  RunConfig cfg;
  Section top(&root, "", origin);
  top.read_enum("mode", cfg.mode, run_mode_from_string);
  if (const auto* n = top.node("seed")) {
    if (!n->is_integer() || n->as_integer()->get() < 0) top.fail("seed", n, "must be a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(n->as_integer()->get());
  }
  top.read("output", cfg.output);

  Section net(subtable(root, "network", origin), "network", origin);
  top.node("network");
  net.read("input_channels", cfg.network.input_channels);
  net.read_ints("widths", cfg.network.widths);
  net.read("classes", cfg.network.classes);
  net.read("height", cfg.network.height);
  net.read("width", cfg.network.width);
  net.read_ints("pool_after", cfg.network.pool_after);
  net.finish();
  net.check([&] { cfg.network.validate(); });

  Section taps(subtable(root, "taps", origin), "taps", origin);
  top.node("taps");
  taps.read("count", cfg.taps.count);
  taps.read_enum("placement", cfg.taps.placement, placement_from_string);
  taps.read("spacing", cfg.taps.spacing);
  taps.read("mi_weight", cfg.taps.mi_weight);
  taps.read("ne_weight", cfg.taps.ne_weight);
  taps.finish();
  taps.check([&] { cfg.taps.resolve(cfg.network.depth()); });

  Section opt(subtable(root, "optimizer", origin), "optimizer", origin);
  top.node("optimizer");
  opt.read_enum("kind", cfg.optimizer.kind, optimizer_from_string);
  opt.read("eta", cfg.optimizer.base_eta);
  opt.read_enum("schedule", cfg.optimizer.schedule, schedule_from_string);
  opt.read("beta1", cfg.optimizer.beta1);
  opt.read("beta2", cfg.optimizer.beta2);
  opt.read("epsilon", cfg.optimizer.epsilon);
  opt.read("weight_decay", cfg.optimizer.weight_decay);
  opt.read("iterations", cfg.optimizer.iterations);
  opt.read("batch_size", cfg.optimizer.batch_size);
  opt.finish();
  opt.check([&] { cfg.optimizer.validate(); });

  Section fed(subtable(root, "fed", origin), "fed", origin);
  top.node("fed");
  if (fed.present()) {
    FedConfig f;
    fed.read("clients", f.clients);
    fed.read("local_epochs", f.local_epochs);
    fed.read("participation", f.participation);
    fed.read("rounds", f.rounds);
    fed.read_enum("partition", f.partition, partition_from_string);
    fed.read("concentration", f.concentration);
    fed.read("classes_per_client", f.classes_per_client);
    fed.read("parallel", f.parallel);
    fed.finish();
    fed.check([&] { f.validate(); });
    cfg.fed = f;
  }

  Section hyb(subtable(root, "hybrid", origin), "hybrid", origin);
  top.node("hybrid");
  hyb.read_enum("regime", cfg.hybrid.regime, regime_from_string);
  hyb.read("alpha0", cfg.hybrid.alpha0);
  hyb.read("beta", cfg.hybrid.beta);
  hyb.read("alpha_min", cfg.hybrid.alpha_min);
  hyb.finish();
  hyb.check([&] { cfg.hybrid.validate(); });

  Section th(subtable(root, "theory", origin), "theory", origin);
  top.node("theory");
  for (const auto& [key, member] : kTheoryFields) th.read(key, cfg.theory.inputs.*member);
  th.read("epsilon", cfg.theory.epsilon);
  th.read("kappa", cfg.theory.kappa);
  th.read("suppress_gradient_term", cfg.theory.suppress_gradient_term);
  th.read("alphas", cfg.theory.alphas);
  th.finish();
  th.check([&] { validate_theory(cfg.theory); });

  Section data(subtable(root, "data", origin), "data", origin);
  top.node("data");
  data.read_enum("kind", cfg.data.kind, data_kind_from_string);
  data.read("samples", cfg.data.samples);
  data.read("separation", cfg.data.separation);
  data.read("noise", cfg.data.noise);
  data.read("test_fraction", cfg.data.test_fraction);
  data.read("cloud_fraction", cfg.data.cloud_fraction);
  data.finish();
  data.check([&] { validate_data(cfg.data, cfg.network); });

  Section esc(subtable(root, "escape", origin), "escape", origin);
  top.node("escape");
  auto& e = cfg.escape;
  esc.read("initial_offset", e.initial_offset);
  esc.read("sigma", e.sigma);
  esc.read("bias", e.bias);
  esc.read("radius", e.radius);
  esc.read("delta", e.delta);
  esc.read("escape_constant", e.escape_constant);
  esc.read("panel_eta", e.panel_eta);
  esc.read("curvatures", e.curvatures);
  esc.read("eta_min", e.eta_min);
  esc.read("eta_max", e.eta_max);
  esc.read("eta_points", e.eta_points);
  esc.read("radii", e.radii);
  esc.read("delta_min", e.delta_min);
  esc.read("delta_max", e.delta_max);
  esc.read("delta_points", e.delta_points);
  esc.finish();
  esc.check([&] { validate_escape(e); });

  Section sad(subtable(root, "saddle", origin), "saddle", origin);
  top.node("saddle");
  auto& s = cfg.saddle;
  sad.read("curvature", s.curvature);
  sad.read("eta", s.eta);
  sad.read("initial_offset", s.initial_offset);
  sad.read("radius", s.radius);
  sad.read("bias", s.bias);
  sad.read("sigma_cloud", s.sigma_cloud);
  sad.read("sigma_device", s.sigma_device);
  sad.read("alpha", s.alpha);
  sad.read("trials", s.trials);
  sad.read("max_steps", s.max_steps);
  sad.read("delta", s.delta);
  sad.read("parallel", s.parallel);
  sad.finish();
  sad.check([&] { validate_saddle(s); });

  Section abl(subtable(root, "ablate", origin), "ablate", origin);
  top.node("ablate");
  abl.read_ints("seeds", cfg.ablate.seeds);
  abl.finish();

  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.string());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "mode = " << quote(to_string(c.mode)) << "\n";
  if (c.seed) o << "seed = " << *c.seed << "\n";
  o << "output = " << quote(c.output) << "\n";

  o << "\n[network]\n"
    << "input_channels = " << c.network.input_channels << "\n"
    << "widths = " << list(c.network.widths) << "\n"
    << "classes = " << c.network.classes << "\n"
    << "height = " << c.network.height << "\n"
    << "width = " << c.network.width << "\n"
    << "pool_after = " << list(c.network.pool_after) << "\n";

  o << "\n[taps]\n"
    << "count = " << c.taps.count << "\n"
    << "placement = " << quote(to_string(c.taps.placement)) << "\n"
    << "spacing = " << c.taps.spacing << "\n"
    << "mi_weight = " << list(c.taps.mi_weight) << "\n"
    << "ne_weight = " << list(c.taps.ne_weight) << "\n";

  const auto& op = c.optimizer;
  o << "\n[optimizer]\n"
    << "kind = " << quote(op.kind == OptimizerKind::adam ? "adam" : "sgd") << "\n"
    << "eta = " << fmt(op.base_eta) << "\n"
    << "schedule = "
    << quote(op.schedule == StepSchedule::inverse_sqrt_t ? "inverse_sqrt_t" : "constant") << "\n"
    << "beta1 = " << fmt(op.beta1) << "\n"
    << "beta2 = " << fmt(op.beta2) << "\n"
    << "epsilon = " << fmt(op.epsilon) << "\n";
  if (op.weight_decay) o << "weight_decay = " << fmt(*op.weight_decay) << "\n";
  o << "iterations = " << op.iterations << "\n"
    << "batch_size = " << op.batch_size << "\n";

  if (c.fed) {
    const auto& f = *c.fed;
    o << "\n[fed]\n"
      << "clients = " << f.clients << "\n"
      << "local_epochs = " << f.local_epochs << "\n"
      << "participation = " << fmt(f.participation) << "\n"
      << "rounds = " << f.rounds << "\n"
      << "partition = " << quote(to_string(f.partition)) << "\n"
      << "concentration = " << fmt(f.concentration) << "\n"
      << "classes_per_client = " << f.classes_per_client << "\n"
      << "parallel = " << (f.parallel ? "true" : "false") << "\n";
  }

  o << "\n[hybrid]\n"
    << "regime = " << quote(to_string(c.hybrid.regime)) << "\n"
    << "alpha0 = " << fmt(c.hybrid.alpha0) << "\n"
    << "beta = " << fmt(c.hybrid.beta) << "\n"
    << "alpha_min = " << fmt(c.hybrid.alpha_min) << "\n";

  o << "\n[theory]\n";
  for (const auto& [key, member] : kTheoryFields) o << key << " = " << fmt(c.theory.inputs.*member) << "\n";
  o << "epsilon = " << fmt(c.theory.epsilon) << "\n"
    << "kappa = " << fmt(c.theory.kappa) << "\n"
    << "suppress_gradient_term = " << (c.theory.suppress_gradient_term ? "true" : "false") << "\n"
    << "alphas = " << list(c.theory.alphas) << "\n";

  o << "\n[data]\n"
    << "kind = " << quote(to_string(c.data.kind)) << "\n"
    << "samples = " << c.data.samples << "\n"
    << "separation = " << fmt(c.data.separation) << "\n"
    << "noise = " << fmt(c.data.noise) << "\n"
    << "test_fraction = " << fmt(c.data.test_fraction) << "\n"
    << "cloud_fraction = " << fmt(c.data.cloud_fraction) << "\n";

  const auto& e = c.escape;
  o << "\n[escape]\n"
    << "initial_offset = " << fmt(e.initial_offset) << "\n"
    << "sigma = " << fmt(e.sigma) << "\n"
    << "bias = " << fmt(e.bias) << "\n"
    << "radius = " << fmt(e.radius) << "\n"
    << "delta = " << fmt(e.delta) << "\n"
    << "escape_constant = " << fmt(e.escape_constant) << "\n"
    << "panel_eta = " << fmt(e.panel_eta) << "\n"
    << "curvatures = " << list(e.curvatures) << "\n"
    << "eta_min = " << fmt(e.eta_min) << "\n"
    << "eta_max = " << fmt(e.eta_max) << "\n"
    << "eta_points = " << e.eta_points << "\n"
    << "radii = " << list(e.radii) << "\n"
    << "delta_min = " << fmt(e.delta_min) << "\n"
    << "delta_max = " << fmt(e.delta_max) << "\n"
    << "delta_points = " << e.delta_points << "\n";

  const auto& s = c.saddle;
  o << "\n[saddle]\n"
    << "curvature = " << fmt(s.curvature) << "\n"
    << "eta = " << fmt(s.eta) << "\n"
    << "initial_offset = " << fmt(s.initial_offset) << "\n"
    << "radius = " << fmt(s.radius) << "\n"
    << "bias = " << fmt(s.bias) << "\n"
    << "sigma_cloud = " << fmt(s.sigma_cloud) << "\n"
    << "sigma_device = " << fmt(s.sigma_device) << "\n"
    << "alpha = " << fmt(s.alpha) << "\n"
    << "trials = " << s.trials << "\n"
    << "max_steps = " << s.max_steps << "\n"
    << "delta = " << fmt(s.delta) << "\n"
    << "parallel = " << (s.parallel ? "true" : "false") << "\n";

  o << "\n[ablate]\n"
    << "seeds = " << list(c.ablate.seeds) << "\n";
  return o.str();
}

std::uint64_t resolve_seed(const RunConfig& config, std::optional<std::uint64_t> override_seed) {
  if (override_seed) return *override_seed;
  if (config.seed) return *config.seed;
  if (const char* env = std::getenv("OMNIISR_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-') throw ConfigError("OMNIISR_SEED is not an unsigned integer");
    return v;
  }
  return 0;
}

}  // namespace omniisr
