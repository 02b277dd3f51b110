#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "omniisr/fedsim.hpp"
#include "omniisr/param_set.hpp"
#include "omniisr/trainer.hpp"

namespace omniisr {

enum class MixingRegime { alternating, fixed, adaptive };

std::string to_string(MixingRegime regime);
MixingRegime regime_from_string(const std::string& text);

/// Weight alpha on the cloud gradient in each hybrid round.
///   alternating: 1 on even rounds, 0 (or alpha_min) on odd rounds
///   fixed:       alpha0 every round
///   adaptive:    starts at alpha0, then clip(alpha + beta (1 - s), 0, 1)
/// Every value is floored at alpha_min.
struct HybridSchedule {
  MixingRegime regime = MixingRegime::adaptive;
  double alpha0 = 0.5;
  double beta = 0.2;
  double alpha_min = 0.0;

  static HybridSchedule fixed(double alpha) { return {MixingRegime::fixed, alpha, 0.0, 0.0}; }
  static HybridSchedule alternating() { return {MixingRegime::alternating, 1.0, 0.0, 0.0}; }
  static HybridSchedule adaptive(double alpha0, double beta, double alpha_min = 0.0) {
    return {MixingRegime::adaptive, alpha0, beta, alpha_min};
  }

  double initial() const;
  void validate() const;

  bool operator==(const HybridSchedule&) const = default;
};

/// Next round's alpha given this round's alpha and gradient similarity s.
double update_alpha(const HybridSchedule& schedule, double alpha, double similarity);

/// (theta - theta_fed) / eta. Throws DomainError when eta is zero.
ParamSet pseudo_gradient(const ParamSet& theta, const ParamSet& theta_fed, double eta);

/// theta - eta (alpha g_cl + (1 - alpha) g_fl).
ParamSet hybrid_step(const ParamSet& theta, const ParamSet& g_cl, const ParamSet& g_fl,
                     double alpha, double eta);

struct AlignmentRecord {
  std::size_t round = 0;
  double inner = 0.0;
  double norm_cl = 0.0;
  double norm_fl = 0.0;
  /// Cosine similarity; 1 when either gradient vanishes.
  double cosine = 1.0;
  double alpha = 0.0;
};

/// Alignment of two gradients over their main-network entries.
AlignmentRecord measure_alignment(const ParamSet& g_cl, const ParamSet& g_fl);

struct HybridRound {
  AlignmentRecord alignment;
  LossBreakdown cloud_loss;
  RoundDiagnostics fed;
};

struct HybridResult {
  ParamSet params;
  std::vector<HybridRound> rounds;
};

/// config.rounds hybrid rounds: a cloud minibatch gradient (weight decay
/// folded in), a full federated round from the same parameters, then the
/// mixed step. Cloud batches follow the centralized sampler of `seed` and the
/// federated round is identical to round t of train_fl under `seed`.
HybridResult train_hybrid(Objective& cloud, std::vector<Client>& clients, ParamSet initial,
                          const FedConfig& fed, const HybridSchedule& schedule,
                          const OptimizerConfig& opt, std::uint64_t seed);

/// Convenience form: partitions `device_data`, initializes from `seed`.
HybridResult train_hybrid(const NetworkSpec& spec, const TapPlan& plan, const Dataset& cloud_data,
                          const Dataset& device_data, const FedConfig& fed,
                          const HybridSchedule& schedule, const OptimizerConfig& opt,
                          std::uint64_t seed);

/// Synthetic gradient pair: g_cl = grad + bias_cl + noise, g_fl = grad +
/// bias_fl + noise, with independent isotropic Gaussian noise of total
/// variance sigma_cl^2 and sigma_fl^2.
struct AlignmentScenario {
  std::vector<double> grad;
  std::vector<double> bias_cl;
  std::vector<double> bias_fl;
  double sigma_cl = 0.0;
  double sigma_fl = 0.0;

  /// ||grad||^2 + <grad, bias_cl + bias_fl> + <bias_cl, bias_fl>.
  double expected_inner() const;
  /// (||bias_cl|| + ||bias_fl||) / ||grad||.
  double bias_ratio() const;
};

struct AlignmentEstimate {
  std::size_t draws = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  double expected = 0.0;
  /// Share of bootstrap resamples whose mean is positive.
  double positive_confidence = 0.0;
  /// First records, for inspection.
  std::vector<AlignmentRecord> records;
};

AlignmentEstimate alignment_probe(const AlignmentScenario& scenario, std::size_t draws,
                                  std::uint64_t seed, std::size_t bootstrap = 1000,
                                  std::size_t keep_records = 16);

}  // namespace omniisr
