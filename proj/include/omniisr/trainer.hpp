#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "omniisr/data.hpp"
#include "omniisr/isr.hpp"
#include "omniisr/network.hpp"
#include "omniisr/param_set.hpp"

namespace omniisr {

/// Loss and gradient of one minibatch.
struct Evaluation {
  LossBreakdown loss;
  ParamSet gradient;
};

/// A finite-sum objective over sample indices 0..sample_count()-1.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t sample_count() const = 0;
  /// Mean loss and gradient over `indices`.
  virtual Evaluation evaluate(const ParamSet& params, std::span<const std::size_t> indices) = 0;
  /// Independent copy, safe to use from another thread.
  virtual std::unique_ptr<Objective> clone() const = 0;

  Evaluation evaluate_full(const ParamSet& params);
};

/// The tapped-network objective over a dataset.
class IsrObjective final : public Objective {
 public:
  IsrObjective(NetworkSpec spec, TapPlan plan, Dataset data);

  std::size_t sample_count() const override { return data_.size(); }
  Evaluation evaluate(const ParamSet& params, std::span<const std::size_t> indices) override;
  std::unique_ptr<Objective> clone() const override;

  const Dataset& data() const { return data_; }
  IsrModel& model() { return model_; }

 private:
  Dataset data_;
  IsrModel model_;
};

/// f_i(theta) = curvature/2 * ||theta - c_i||^2 over a single parameter
/// "theta" holding a vector. The full-batch gradient is curvature-Lipschitz.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(double curvature, std::vector<std::vector<double>> centres);

  std::size_t sample_count() const override { return centres_.size(); }
  Evaluation evaluate(const ParamSet& params, std::span<const std::size_t> indices) override;
  std::unique_ptr<Objective> clone() const override;

  ParamSet params(std::vector<double> theta) const;
  double curvature() const { return curvature_; }

 private:
  double curvature_;
  std::vector<std::vector<double>> centres_;
};

enum class OptimizerKind { sgd, adam };
enum class StepSchedule { constant, inverse_sqrt_t };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double base_eta = 0.05;
  StepSchedule schedule = StepSchedule::constant;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 penalty added to the gradient. Unset means 1e-4 for Adam, 0 for SGD.
  std::optional<double> weight_decay;
  std::size_t iterations = 100;
  /// Minibatch size; 0 or >= the sample count means full batch.
  std::size_t batch_size = 32;

  /// Step size used at every iteration of a run.
  double eta() const;
  double effective_weight_decay() const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;

  bool operator==(const OptimizerConfig&) const = default;
};

/// Applies SGD or Adam updates in place.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(ParamSet& params, const ParamSet& gradient);
  /// Forgets Adam moments and the step counter.
  void reset();
  double eta() const { return config_.eta(); }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  ParamSet first_;
  ParamSet second_;
};

/// Minibatches drawn epoch by epoch from a fresh permutation. A full batch
/// returns every index in natural order.
class BatchSampler {
 public:
  BatchSampler(std::size_t samples, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t batches_per_epoch() const;
  bool full_batch() const { return batch_ >= samples_; }

 private:
  std::size_t samples_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

struct TraceRow {
  std::size_t iter = 0;
  LossBreakdown loss;
  /// Squared norm of the main-network part of the gradient.
  double grad_norm_sq = 0.0;
  double eta = 0.0;
  double wall_seconds = 0.0;
};

using RunTrace = std::vector<TraceRow>;

struct TrainOptions {
  /// Record the full-batch gradient norm instead of the minibatch one.
  bool exact_grad_norm = false;
};

struct TrainResult {
  ParamSet params;
  RunTrace trace;
};

/// Minibatch training of `objective` from `initial` for config.iterations
/// steps. Batches are drawn from the `batches` stream of `seed`. Throws
/// TrainingAborted on a non-finite loss or gradient.
TrainResult train_cl(Objective& objective, ParamSet initial, const OptimizerConfig& config,
                     std::uint64_t seed, const TrainOptions& options = {});

/// Convenience form: initializes the network from `seed` and trains on `data`.
TrainResult train_cl(const NetworkSpec& spec, const TapPlan& plan, const Dataset& data,
                     const OptimizerConfig& config, std::uint64_t seed,
                     const TrainOptions& options = {});

/// Sampler used for centralized iterations under `seed`.
BatchSampler cl_sampler(std::size_t samples, std::size_t batch_size, std::uint64_t seed);

struct ConstantsOptions {
  std::size_t probes = 4;
  double radius = 0.1;
  std::size_t batch_size = 32;
  std::size_t minibatches = 16;
  std::uint64_t seed = 0;
  /// Lowest loss observed elsewhere, used as the optimum proxy when lower
  /// than every probe loss.
  std::optional<double> best_seen;
};

/// Empirical stand-ins for the smoothness, gradient-bound, variance and gap
/// constants.
struct ConstantsEstimate {
  double smoothness = 0.0;
  double grad_bound_sq = 0.0;
  double variance = 0.0;
  double initial_gap = 0.0;
  /// The optimum is approximated by the best loss seen.
  bool gap_is_proxy = true;
  std::size_t skipped_pairs = 0;
};

/// Probes `probes` points at distance `radius` around `centre`.
ConstantsEstimate estimate_constants(Objective& objective, const ParamSet& centre,
                                     const ConstantsOptions& options);

}  // namespace omniisr
