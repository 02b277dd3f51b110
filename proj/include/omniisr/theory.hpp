#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace omniisr {

/// Every constant the closed-form bounds consume. Unspecified proportionality
/// constants default to 1.
struct TheoryInputs {
  double smoothness = 1.0;        // largest per-component smoothness constant
  double grad_bound_sq = 1.0;     // aggregate second-moment bound on gradients
  double variance = 0.0;          // aggregate minibatch variance bound
  double initial_gap = 1.0;       // loss at the start minus the optimum
  double eta = 0.1;               // base step size; iterations use eta / sqrt(T)
  double iterations = 100.0;      // T
  double local_epochs = 1.0;      // E
  double heterogeneity = 0.0;     // mean client gradient dissimilarity
  double drift_constant = 1.0;    // c in the drift term
  double bound_constant = 1.0;    // C in the hybrid bound
  double bias_cl = 0.0;           // norm bound on the cloud gradient bias
  double bias_fl = 0.0;           // norm bound on the federated gradient bias
  double variance_cl = 0.0;
  double variance_fl = 0.0;
  double alpha_min = 0.5;
  double bias_eff = 0.0;
  double variance_eff = 0.0;
  double curvature = 0.1;         // magnitude of the negative eigenvalue at the saddle
  double hessian_lipschitz = 1.0;
  double initial_offset = 0.5;    // displacement along the escape direction
  double escape_constant = 1.0;
  double radius = 10.0;
  double delta = 0.1;             // failure probability

  /// Nonnegativity, delta in (0,1), alpha_min in [0,1]. Throws ConfigError.
  void validate() const;

  bool operator==(const TheoryInputs&) const = default;
};

enum class BoundMode { cl, fl, hybrid };
std::string to_string(BoundMode mode);
BoundMode bound_mode_from_string(const std::string& text);

struct BoundReport {
  BoundMode mode = BoundMode::cl;
  double initial_gap = 0.0;
  double variance = 0.0;
  double drift = 0.0;
  double bias_floor = 0.0;  // does not decay with T
  double total = 0.0;       // always the sum of the four terms
  bool feasible = true;
  std::string condition;    // the precondition that was checked

  // Federated only: the drift term feeds back on the bounded quantity.
  // seed_total is the centralized bound used as the first guess, first_pass
  // the total after one re-evaluation; `total` is the exact fixed point.
  double seed_total = 0.0;
  double first_pass = 0.0;
};

BoundReport bound_cl(const TheoryInputs& in);

struct FlBoundOptions {
  /// Drop the running gradient term from the drift, keeping only heterogeneity.
  bool suppress_gradient_term = false;
  /// Multiplies the heterogeneity (contraction from representation alignment).
  double kappa = 1.0;
};
BoundReport bound_fl(const TheoryInputs& in, const FlBoundOptions& options = {});

BoundReport bound_hybrid(const TheoryInputs& in);

struct EffectiveQuantities {
  double bias = 0.0;
  double variance = 0.0;
  double alpha_min = 0.0;
};

/// From norm bounds only: max_t (alpha_t B_c + (1 - alpha_t) B_f).
EffectiveQuantities effective_quantities(const TheoryInputs& in, const std::vector<double>& alphas);
/// From explicit bias vectors: max_t ||alpha_t b_c + (1 - alpha_t) b_f||.
EffectiveQuantities effective_quantities(const TheoryInputs& in, const std::vector<double>& alphas,
                                         const std::vector<double>& bias_cl,
                                         const std::vector<double>& bias_fl);

struct Complexity {
  bool feasible = true;
  double sqrt_iterations = 0.0;
  double iterations = 0.0;           // exact real-valued T
  std::uint64_t rounds = 0;          // ceil(T)
  double order_estimate = 0.0;       // hybrid: constant-free leading-order count
  std::string reason;
};

/// Smallest T at which the explicit bound equals epsilon, at the configured eta.
Complexity complexity(BoundMode mode, const TheoryInputs& in, double epsilon,
                      const FlBoundOptions& options = {});

/// CL/FL count with eta chosen to minimise T. T is then linear in the
/// noise-plus-heterogeneity budget, which is the form the order-level
/// statements use.
Complexity complexity_tuned_eta(BoundMode mode, const TheoryInputs& in, double epsilon,
                                const FlBoundOptions& options = {}, double* best_eta = nullptr);

/// Iterations to leave the radius-R ball with probability 1 - delta, or
/// nullopt where the closed form is meaningless (denominator <= 0 or the log
/// argument below 1).
std::optional<double> escape_time(const TheoryInputs& in);

struct EscapeRow {
  char panel = 'a';
  double curvature = 0.0;
  double eta = 0.0;
  double radius = 0.0;
  double delta = 0.0;
  std::optional<double> time;
};

/// lo..hi inclusive, geometrically spaced.
std::vector<double> log_grid(double lo, double hi, std::size_t points);

/// y0 = 0.5, sigma_eff = 0.1, no bias, R = 10, delta = 0.1, unit escape constant.
TheoryInputs default_escape_inputs();

struct EscapeSweepConfig {
  TheoryInputs base = default_escape_inputs();
  std::vector<double> curvatures{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  std::vector<double> etas = log_grid(1e-3, 1.0, 61);
  std::vector<double> radii{1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0};
  std::vector<double> deltas = log_grid(1e-3, 0.5, 25);
  /// Step size held fixed in the curvature, radius and delta panels.
  double panel_eta = 0.01;
};

/// Panels: (a) curvature at fixed eta, (b) eta for each curvature,
/// (c) radius for each curvature, (d) delta for each curvature.
std::vector<EscapeRow> escape_sweep(const EscapeSweepConfig& config);

/// Shape summaries of a sweep, one value per curvature where relevant.
struct EscapeShapes {
  bool decreasing_in_curvature = true;
  std::vector<std::pair<double, bool>> interior_eta_minimum;  // (curvature, found)
  std::vector<std::pair<double, double>> log_radius_r2;       // (curvature, R^2)
  std::vector<std::pair<double, double>> delta_variation;     // (curvature, (max-min)/min)
};
EscapeShapes escape_shapes(const std::vector<EscapeRow>& rows);

/// Noise source in the saddle testbed: weight * N(0, sigma^2) per step.
struct NoiseSource {
  double weight = 1.0;
  double sigma = 0.0;
};

/// Noisy gradient descent on f(x, y) = L x^2 / 2 - curvature y^2 / 2. The
/// stable coordinate is decoupled, so only y is simulated:
///   y <- (1 + eta curvature) y - eta (bias + sum_k weight_k xi_k).
struct SaddleConfig {
  double curvature = 0.1;
  double eta = 0.01;
  double initial_offset = 0.5;
  double radius = 10.0;
  double bias = 0.0;
  std::vector<NoiseSource> noise{{1.0, 0.1}};
  std::size_t trials = 1000;
  std::size_t max_steps = 1'000'000;
  std::uint64_t seed = 0;
  bool parallel = false;

  /// Standard deviation of the summed per-step noise.
  double effective_sigma() const;
  void validate() const;
};

struct SaddleResult {
  /// Escape step of every non-censored trial, ascending.
  std::vector<double> times;
  std::size_t censored = 0;
  std::size_t trials = 0;

  /// Empirical quantile over all trials, censored ones counted as +inf.
  /// nullopt when the requested quantile falls among censored trials.
  std::optional<double> quantile(double q) const;
  std::optional<double> median() const { return quantile(0.5); }
};

/// Trial i draws noise source k from the stream (seed, trial, i, k), so
/// configurations with the same seed share their random numbers.
SaddleResult saddle_sim(const SaddleConfig& config);

/// Closed-form inputs matching a testbed configuration.
TheoryInputs escape_inputs_for(const SaddleConfig& config, double delta, double escape_constant);

/// Escape constant that makes the closed form equal `empirical_time` for the
/// given configuration. nullopt when the closed form is undefined there.
std::optional<double> calibrate_escape_constant(const SaddleConfig& config, double delta,
                                                double empirical_time);

/// Fixed-width text table of reports, one column per mode.
std::string format_reports(const std::vector<BoundReport>& reports);

}  // namespace omniisr
