#include "omniisr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <map>
#include <random>
#include <thread>

#include "omniisr/errors.hpp"
#include "omniisr/rng.hpp"

namespace omniisr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonnegative(double value, const char* name) {
  if (!(value >= 0.0) || !std::isfinite(value))
    throw ConfigError(std::string("theory.") + name + " must be finite and non-negative");
}

void finish(BoundReport& r) { r.total = r.initial_gap + r.variance + r.drift + r.bias_floor; }

// Centralized terms shared by the centralized and federated bounds.
void centralized_terms(const TheoryInputs& in, BoundReport& r) {
  const double root_t = std::sqrt(in.iterations);
  r.initial_gap = 2.0 * in.initial_gap / (in.eta * root_t);
  r.variance = in.smoothness * in.eta * (in.grad_bound_sq + in.variance) / root_t;
}

// Noise budget multiplying L * eta in the centralized / federated inversions.
double noise_budget(BoundMode mode, const TheoryInputs& in, double epsilon,
                    const FlBoundOptions& options) {
  double budget = in.grad_bound_sq + in.variance;
  if (mode == BoundMode::fl) {
    const double het = options.kappa * in.heterogeneity;
    const double grad = options.suppress_gradient_term ? 0.0 : epsilon;
    budget += in.drift_constant * in.local_epochs * in.local_epochs * (grad + het);
  }
  return budget;
}

void set_count(Complexity& c, double sqrt_t) {
  c.sqrt_iterations = sqrt_t;
  c.iterations = sqrt_t * sqrt_t;
  c.rounds = static_cast<std::uint64_t>(std::ceil(c.iterations));
}

// y0 - eta * bias / curvature - eta * sigma / sqrt(eta * curvature) * sqrt(ln(2/delta))
double escape_denominator(const TheoryInputs& in) {
  const double bias_shift = in.eta * in.bias_eff / in.curvature;
  const double noise_shift = in.eta * std::sqrt(in.variance_eff) /
                             std::sqrt(in.eta * in.curvature) *
                             std::sqrt(std::log(2.0 / in.delta));
  return in.initial_offset - bias_shift - noise_shift;
}

void check_escape_inputs(const TheoryInputs& in) {
  if (!(in.curvature > 0.0)) throw DomainError("escape time needs positive curvature");
  if (!(in.eta > 0.0)) throw DomainError("escape time needs a positive step size");
  if (!(in.delta > 0.0 && in.delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  return sxy * sxy / (sxx * syy);
}

}  // namespace

void TheoryInputs::validate() const {
  const std::pair<double, const char*> fields[] = {
      {smoothness, "smoothness"},         {grad_bound_sq, "grad_bound_sq"},
      {variance, "variance"},             {initial_gap, "initial_gap"},
      {eta, "eta"},                       {iterations, "iterations"},
      {local_epochs, "local_epochs"},     {heterogeneity, "heterogeneity"},
      {drift_constant, "drift_constant"}, {bound_constant, "bound_constant"},
      {bias_cl, "bias_cl"},               {bias_fl, "bias_fl"},
      {variance_cl, "variance_cl"},       {variance_fl, "variance_fl"},
      {alpha_min, "alpha_min"},           {bias_eff, "bias_eff"},
      {variance_eff, "variance_eff"},     {curvature, "curvature"},
      {hessian_lipschitz, "hessian_lipschitz"}, {initial_offset, "initial_offset"},
      {escape_constant, "escape_constant"},     {radius, "radius"},
      {delta, "delta"},
  };
  for (const auto& [value, name] : fields) require_nonnegative(value, name);
  if (!(eta > 0.0)) throw ConfigError("theory.eta must be positive");
  if (!(iterations > 0.0)) throw ConfigError("theory.iterations must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("theory.delta must lie in (0, 1)");
  if (alpha_min > 1.0) throw ConfigError("theory.alpha_min must lie in [0, 1]");
}

std::string to_string(BoundMode mode) {
  switch (mode) {
    case BoundMode::cl: return "cl";
    case BoundMode::fl: return "fl";
    case BoundMode::hybrid: return "hybrid";
  }
  return "?";
}

BoundMode bound_mode_from_string(const std::string& text) {
  if (text == "cl") return BoundMode::cl;
  if (text == "fl") return BoundMode::fl;
  if (text == "hybrid") return BoundMode::hybrid;
  throw ConfigError("unknown bound mode '" + text + "' (expected cl|fl|hybrid)");
}

BoundReport bound_cl(const TheoryInputs& in) {
  BoundReport r;
  r.mode = BoundMode::cl;
  centralized_terms(in, r);
  r.condition = "L*eta <= sqrt(T)";
  r.feasible = in.smoothness * in.eta <= std::sqrt(in.iterations);
  finish(r);
  return r;
}

BoundReport bound_fl(const TheoryInputs& in, const FlBoundOptions& options) {
  BoundReport r;
  r.mode = BoundMode::fl;
  centralized_terms(in, r);
  const double root_t = std::sqrt(in.iterations);
  const double e2 = in.local_epochs * in.local_epochs;
  // Drift term = k * (A + H) with A the bounded running mean itself.
  const double k = in.smoothness * in.eta * in.drift_constant * e2 / root_t;
  const double het = options.kappa * in.heterogeneity;
  const double base = r.initial_gap + r.variance;

  r.seed_total = base;
  if (options.suppress_gradient_term) {
    r.drift = k * het;
    r.first_pass = base + r.drift;
  } else {
    r.first_pass = base + k * (base + het);
    const double fixed_point = k < 1.0 ? (base + k * het) / (1.0 - k) : kInf;
    r.drift = k < 1.0 ? k * (fixed_point + het) : kInf;
  }
  r.condition = "L*eta*sqrt(T)*c*E^2 < 1";
  r.feasible = in.smoothness * in.eta * root_t * in.drift_constant * e2 < 1.0 && k < 1.0;
  finish(r);
  return r;
}

BoundReport bound_hybrid(const TheoryInputs& in) {
  BoundReport r;
  r.mode = BoundMode::hybrid;
  const double root_t = std::sqrt(in.iterations);
  const double c = in.bound_constant;
  r.initial_gap = in.alpha_min > 0.0 ? c * in.initial_gap / (in.alpha_min * in.eta * root_t) : kInf;
  r.variance = c * in.eta * in.variance_eff / root_t;
  r.bias_floor = c * in.bias_eff * in.bias_eff;
  r.condition = "alpha_min > 0 and L*eta <= sqrt(T)/4";
  r.feasible = in.alpha_min > 0.0 && in.smoothness * in.eta <= root_t / 4.0;
  finish(r);
  return r;
}

EffectiveQuantities effective_quantities(const TheoryInputs& in, const std::vector<double>& alphas) {
  if (alphas.empty()) throw DomainError("effective quantities need a nonempty alpha sequence");
  EffectiveQuantities q;
  q.alpha_min = *std::min_element(alphas.begin(), alphas.end());
  for (double a : alphas) q.bias = std::max(q.bias, a * in.bias_cl + (1.0 - a) * in.bias_fl);
  q.variance = q.alpha_min * q.alpha_min * in.variance_cl +
               (1.0 - q.alpha_min) * (1.0 - q.alpha_min) * in.variance_fl;
  return q;
}

EffectiveQuantities effective_quantities(const TheoryInputs& in, const std::vector<double>& alphas,
                                         const std::vector<double>& bias_cl,
                                         const std::vector<double>& bias_fl) {
  if (bias_cl.size() != bias_fl.size()) throw DomainError("bias vectors differ in length");
  EffectiveQuantities q = effective_quantities(in, alphas);
  q.bias = 0.0;
  for (double a : alphas) {
    double sq = 0.0;
    for (std::size_t i = 0; i < bias_cl.size(); ++i) {
      const double v = a * bias_cl[i] + (1.0 - a) * bias_fl[i];
      sq += v * v;
    }
    q.bias = std::max(q.bias, std::sqrt(sq));
  }
  return q;
}

Complexity complexity(BoundMode mode, const TheoryInputs& in, double epsilon,
                      const FlBoundOptions& options) {
  if (!(epsilon > 0.0)) throw DomainError("target epsilon must be positive");
  Complexity c;
  if (mode == BoundMode::hybrid) {
    const double cc = in.bound_constant;
    const double floor = cc * in.bias_eff * in.bias_eff;
    if (!(in.alpha_min > 0.0)) {
      c.feasible = false;
      c.reason = "alpha_min is zero";
      return c;
    }
    if (epsilon <= floor) {
      c.feasible = false;
      c.reason = "below bias floor";
      return c;
    }
    const double margin = epsilon - floor;
    set_count(c, (cc * in.initial_gap / (in.alpha_min * in.eta) + cc * in.eta * in.variance_eff) /
                     margin);
    c.order_estimate = in.initial_gap * in.variance_eff /
                       (in.alpha_min * in.alpha_min * margin * margin);
    return c;
  }
  const double budget = noise_budget(mode, in, epsilon, options);
  set_count(c, (2.0 * in.initial_gap / in.eta + in.smoothness * in.eta * budget) / epsilon);
  return c;
}

Complexity complexity_tuned_eta(BoundMode mode, const TheoryInputs& in, double epsilon,
                                const FlBoundOptions& options, double* best_eta) {
  if (!(epsilon > 0.0)) throw DomainError("target epsilon must be positive");
  // sqrt(T) = (a / eta + b eta) / margin is minimised at eta = sqrt(a / b).
  double a = 0.0, b = 0.0, margin = epsilon;
  if (mode == BoundMode::hybrid) {
    Complexity probe = complexity(mode, in, epsilon, options);
    if (!probe.feasible) return probe;
    a = in.bound_constant * in.initial_gap / in.alpha_min;
    b = in.bound_constant * in.variance_eff;
    margin = epsilon - in.bound_constant * in.bias_eff * in.bias_eff;
  } else {
    a = 2.0 * in.initial_gap;
    b = in.smoothness * noise_budget(mode, in, epsilon, options);
  }
  Complexity c;
  if (best_eta) *best_eta = b > 0.0 ? std::sqrt(a / b) : kInf;
  set_count(c, 2.0 * std::sqrt(a * b) / margin);
  return c;
}

std::optional<double> escape_time(const TheoryInputs& in) {
  check_escape_inputs(in);
  const double denominator = escape_denominator(in);
  if (!(denominator > 0.0)) return std::nullopt;
  const double argument = in.escape_constant * in.radius / denominator;
  if (!(argument >= 1.0)) return std::nullopt;
  return std::log(argument) / (in.eta * in.curvature);
}

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0 && hi >= lo) || points == 0) throw DomainError("invalid log grid");
  std::vector<double> grid(points);
  if (points == 1) return {lo};
  const double step = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = lo * std::exp(step * static_cast<double>(i));
  grid.back() = hi;
  return grid;
}

TheoryInputs default_escape_inputs() {
  TheoryInputs in;
  in.initial_offset = 0.5;
  in.variance_eff = 0.01;
  in.bias_eff = 0.0;
  in.radius = 10.0;
  in.delta = 0.1;
  in.escape_constant = 1.0;
  in.eta = 0.01;
  in.curvature = 0.1;
  return in;
}

std::vector<EscapeRow> escape_sweep(const EscapeSweepConfig& config) {
  if (config.curvatures.empty() || config.etas.empty() || config.radii.empty() ||
      config.deltas.empty())
    throw DomainError("escape sweep grids must be nonempty");
  std::vector<EscapeRow> rows;
  auto emit = [&](char panel, double gamma, double eta, double radius, double delta) {
    TheoryInputs in = config.base;
    in.curvature = gamma;
    in.eta = eta;
    in.radius = radius;
    in.delta = delta;
    rows.push_back({panel, gamma, eta, radius, delta, escape_time(in)});
  };
  const TheoryInputs& b = config.base;
  for (double g : config.curvatures) emit('a', g, config.panel_eta, b.radius, b.delta);
  for (double g : config.curvatures)
    for (double e : config.etas) emit('b', g, e, b.radius, b.delta);
  for (double g : config.curvatures)
    for (double r : config.radii) emit('c', g, config.panel_eta, r, b.delta);
  for (double g : config.curvatures)
    for (double d : config.deltas) emit('d', g, config.panel_eta, b.radius, d);
  return rows;
}

EscapeShapes escape_shapes(const std::vector<EscapeRow>& rows) {
  EscapeShapes shapes;
  std::vector<std::pair<double, double>> panel_a;
  std::map<double, std::vector<std::pair<double, std::optional<double>>>> panel_b;
  std::map<double, std::vector<std::pair<double, double>>> panel_c, panel_d;
  for (const auto& row : rows) {
    switch (row.panel) {
      case 'a':
        if (row.time) panel_a.emplace_back(row.curvature, *row.time);
        break;
      case 'b': panel_b[row.curvature].emplace_back(row.eta, row.time); break;
      case 'c':
        if (row.time) panel_c[row.curvature].emplace_back(std::log(row.radius), *row.time);
        break;
      case 'd':
        if (row.time) panel_d[row.curvature].emplace_back(row.delta, *row.time);
        break;
      default: break;
    }
  }
  std::sort(panel_a.begin(), panel_a.end());
  for (std::size_t i = 1; i < panel_a.size(); ++i)
    if (!(panel_a[i].second < panel_a[i - 1].second)) shapes.decreasing_in_curvature = false;

  for (auto& [gamma, series] : panel_b) {
    std::sort(series.begin(), series.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<double> defined;
    for (const auto& [eta, t] : series)
      if (t) defined.push_back(*t);
    bool interior = false;
    if (defined.size() >= 3) {
      const auto best = std::min_element(defined.begin(), defined.end()) - defined.begin();
      interior = best > 0 && static_cast<std::size_t>(best) + 1 < defined.size();
    }
    shapes.interior_eta_minimum.emplace_back(gamma, interior);
  }
  for (const auto& [gamma, series] : panel_c) {
    std::vector<double> x, y;
    for (const auto& [lr, t] : series) x.push_back(lr), y.push_back(t);
    shapes.log_radius_r2.emplace_back(
        gamma, x.size() >= 3 ? r_squared(x, y) : std::numeric_limits<double>::quiet_NaN());
  }
  for (const auto& [gamma, series] : panel_d) {
    double lo = kInf, hi = -kInf;
    for (const auto& [d, t] : series) lo = std::min(lo, t), hi = std::max(hi, t);
    shapes.delta_variation.emplace_back(gamma, lo > 0.0 ? (hi - lo) / lo : kInf);
  }
  return shapes;
}

double SaddleConfig::effective_sigma() const {
  double var = 0.0;
  for (const auto& s : noise) var += s.weight * s.weight * s.sigma * s.sigma;
  return std::sqrt(var);
}

void SaddleConfig::validate() const {
  if (trials < 100) throw ConfigError("saddle.trials must be at least 100");
  if (!(curvature > 0.0)) throw ConfigError("saddle.curvature must be positive");
  if (!(eta > 0.0)) throw ConfigError("saddle.eta must be positive");
  if (!(radius > 0.0)) throw ConfigError("saddle.radius must be positive");
  if (max_steps == 0) throw ConfigError("saddle.max_steps must be positive");
  for (const auto& s : noise)
    if (!(s.sigma >= 0.0)) throw ConfigError("saddle noise sigma must be non-negative");
}

std::optional<double> SaddleResult::quantile(double q) const {
  if (trials == 0) return std::nullopt;
  const double rank = std::ceil(std::clamp(q, 0.0, 1.0) * static_cast<double>(trials));
  const std::size_t index = rank < 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  if (index >= times.size()) return std::nullopt;
  return times[index];
}

SaddleResult saddle_sim(const SaddleConfig& config) {
  config.validate();
  const double growth = 1.0 + config.eta * config.curvature;

  // Escape step of one trial, or -1 when it stays inside until the cap.
  auto run_trial = [&](std::size_t trial) -> long long {
    std::vector<Rng> rngs;
    rngs.reserve(config.noise.size());
    for (std::size_t k = 0; k < config.noise.size(); ++k)
      rngs.push_back(make_rng(config.seed, Stream::trial, trial, k));
    std::normal_distribution<double> normal(0.0, 1.0);
    double y = config.initial_offset;
    if (std::abs(y) >= config.radius) return 0;
    for (std::size_t t = 1; t <= config.max_steps; ++t) {
      double noise = 0.0;
      for (std::size_t k = 0; k < config.noise.size(); ++k)
        if (config.noise[k].sigma > 0.0)
          noise += config.noise[k].weight * config.noise[k].sigma * normal(rngs[k]);
      y = growth * y - config.eta * (config.bias + noise);
      if (std::abs(y) >= config.radius) return static_cast<long long>(t);
    }
    return -1;
  };

  std::vector<long long> outcome(config.trials);
  if (config.parallel) {
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < config.trials; i += workers) outcome[i] = run_trial(i);
      }));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t i = 0; i < config.trials; ++i) outcome[i] = run_trial(i);
  }

  SaddleResult result;
  result.trials = config.trials;
  for (long long t : outcome) {
    if (t < 0)
      ++result.censored;
    else
      result.times.push_back(static_cast<double>(t));
  }
  std::sort(result.times.begin(), result.times.end());
  return result;
}

TheoryInputs escape_inputs_for(const SaddleConfig& config, double delta, double escape_constant) {
  TheoryInputs in = default_escape_inputs();
  in.curvature = config.curvature;
  in.eta = config.eta;
  in.initial_offset = config.initial_offset;
  in.radius = config.radius;
  in.bias_eff = std::abs(config.bias);
  const double sigma = config.effective_sigma();
  in.variance_eff = sigma * sigma;
  in.delta = delta;
  in.escape_constant = escape_constant;
  return in;
}

std::optional<double> calibrate_escape_constant(const SaddleConfig& config, double delta,
                                                double empirical_time) {
  const TheoryInputs in = escape_inputs_for(config, delta, 1.0);
  check_escape_inputs(in);
  const double denominator = escape_denominator(in);
  if (!(denominator > 0.0)) return std::nullopt;
  return denominator * std::exp(config.eta * config.curvature * empirical_time) / config.radius;
}

std::string format_reports(const std::vector<BoundReport>& reports) {
  auto cell = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%14.6g", v);
    return std::string(buf);
  };
  auto label = [](const char* name) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-14s", name);
    return std::string(buf);
  };
  std::string out = label("term");
  for (const auto& r : reports) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%14s", to_string(r.mode).c_str());
    out += buf;
  }
  out += '\n';
  const std::pair<const char*, double BoundReport::*> rows[] = {
      {"initial gap", &BoundReport::initial_gap}, {"variance", &BoundReport::variance},
      {"drift", &BoundReport::drift},             {"bias floor", &BoundReport::bias_floor},
      {"total", &BoundReport::total},
  };
  for (const auto& [name, member] : rows) {
    out += label(name);
    for (const auto& r : reports) out += cell(r.*member);
    out += '\n';
  }
  out += label("feasible");
  for (const auto& r : reports) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%14s", r.feasible ? "yes" : "no");
    out += buf;
  }
  out += '\n';
  for (const auto& r : reports) out += to_string(r.mode) + " condition: " + r.condition + '\n';
  return out;
}

}  // namespace omniisr
