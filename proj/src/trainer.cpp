#include "omniisr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "omniisr/errors.hpp"
#include "omniisr/rng.hpp"

namespace omniisr {

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

Evaluation Objective::evaluate_full(const ParamSet& params) {
  const auto idx = all_indices(sample_count());
  return evaluate(params, idx);
}

IsrObjective::IsrObjective(NetworkSpec spec, TapPlan plan, Dataset data)
    : data_(std::move(data)), model_(std::move(spec), std::move(plan)) {
  if (data_.empty()) throw ConfigError("objective needs a non-empty dataset");
  const auto& s = model_.spec();
  if (data_.classes() != s.classes || data_.channels() != s.input_channels ||
      data_.height() != s.height || data_.width() != s.width) {
    throw ConfigError("dataset layout does not match the network spec");
  }
}

Evaluation IsrObjective::evaluate(const ParamSet& params, std::span<const std::size_t> indices) {
  model_.load(params);
  Evaluation out;
  out.loss = model_.evaluate(data_.gather(indices));
  out.gradient = model_.gradient();
  return out;
}

std::unique_ptr<Objective> IsrObjective::clone() const {
  return std::make_unique<IsrObjective>(model_.spec(), model_.plan(), data_);
}

QuadraticObjective::QuadraticObjective(double curvature, std::vector<std::vector<double>> centres)
    : curvature_(curvature), centres_(std::move(centres)) {
  if (centres_.empty()) throw ConfigError("quadratic objective needs at least one centre");
  for (const auto& c : centres_) {
    if (c.size() != centres_[0].size()) throw ConfigError("quadratic centres differ in dimension");
  }
}

ParamSet QuadraticObjective::params(std::vector<double> theta) const {
  ParamSet p;
  p.insert("theta", Tensor::vector(std::move(theta)));
  return p;
}

Evaluation QuadraticObjective::evaluate(const ParamSet& params,
                                        std::span<const std::size_t> indices) {
  const Tensor& theta = params.at("theta");
  if (theta.size() != centres_[0].size()) throw ProtocolError("theta has the wrong dimension");
  Evaluation out;
  Tensor grad(theta.shape());
  double loss = 0.0;
  for (std::size_t i : indices) {
    for (std::size_t d = 0; d < theta.size(); ++d) {
      const double diff = theta[d] - centres_.at(i)[d];
      loss += 0.5 * curvature_ * diff * diff;
      grad[d] += curvature_ * diff;
    }
  }
  const double n = static_cast<double>(indices.size());
  for (double& g : grad.values()) g /= n;
  out.loss.ce = loss / n;
  out.loss.total = out.loss.ce;
  out.gradient.insert("theta", std::move(grad));
  return out;
}

std::unique_ptr<Objective> QuadraticObjective::clone() const {
  return std::make_unique<QuadraticObjective>(*this);
}

double OptimizerConfig::eta() const {
  if (schedule == StepSchedule::inverse_sqrt_t) {
    return base_eta / std::sqrt(static_cast<double>(iterations));
  }
  return base_eta;
}

double OptimizerConfig::effective_weight_decay() const {
  if (weight_decay) return *weight_decay;
  return kind == OptimizerKind::adam ? 1e-4 : 0.0;
}

void OptimizerConfig::validate() const {
  if (!(base_eta >= 0.0) || !std::isfinite(base_eta)) {
    throw ConfigError("optimizer eta must be a finite non-negative number");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (effective_weight_decay() < 0.0) throw ConfigError("weight decay must be non-negative");
  if (iterations == 0) throw ConfigError("iterations must be positive");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(std::move(config)) { config_.validate(); }

void Optimizer::reset() {
  steps_ = 0;
  first_ = ParamSet{};
  second_ = ParamSet{};
}

void Optimizer::step(ParamSet& params, const ParamSet& gradient) {
  const double eta = config_.eta();
  const double decay = config_.effective_weight_decay();
  ParamSet g = gradient;
  if (decay != 0.0) g.axpy(decay, params);
  if (config_.kind == OptimizerKind::sgd) {
    params.axpy(-eta, g);
    return;
  }
  if (first_.empty()) {
    first_ = g.zeros_like();
    second_ = g.zeros_like();
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (auto& [name, entry] : params) {
    const Tensor& gt = g.at(name);
    Tensor& m = first_.at(name);
    Tensor& v = second_.at(name);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * gt[i];
      v[i] = b2 * v[i] + (1.0 - b2) * gt[i] * gt[i];
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      entry.value[i] -= eta * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

BatchSampler::BatchSampler(std::size_t samples, std::size_t batch_size, std::uint64_t seed)
    : samples_(samples), batch_(batch_size == 0 ? samples : batch_size), seed_(seed) {
  if (samples == 0) throw ConfigError("cannot sample batches from an empty dataset");
}

std::size_t BatchSampler::batches_per_epoch() const {
  return full_batch() ? 1 : (samples_ + batch_ - 1) / batch_;
}

std::vector<std::size_t> BatchSampler::next() {
  if (full_batch()) return all_indices(samples_);
  if (cursor_ == 0 || cursor_ >= samples_) {
    Rng rng = make_rng(seed_, Stream::batches, epoch_++);
    order_ = permutation(samples_, rng);
    cursor_ = 0;
  }
  const std::size_t end = std::min(samples_, cursor_ + batch_);
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

BatchSampler cl_sampler(std::size_t samples, std::size_t batch_size, std::uint64_t seed) {
  return BatchSampler(samples, batch_size, derive_seed(seed, Stream::batches));
}

TrainResult train_cl(Objective& objective, ParamSet initial, const OptimizerConfig& config,
                     std::uint64_t seed, const TrainOptions& options) {
  Optimizer optimizer(config);
  BatchSampler sampler = cl_sampler(objective.sample_count(), config.batch_size, seed);
  TrainResult result{std::move(initial), {}};
  result.trace.reserve(config.iterations);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const auto batch = sampler.next();
    Evaluation eval = objective.evaluate(result.params, batch);
    if (!std::isfinite(eval.loss.total) || !eval.gradient.all_finite()) {
      throw TrainingAborted(t, "non-finite loss at iteration " + std::to_string(t));
    }
    TraceRow row;
    row.iter = t;
    row.loss = eval.loss;
    row.grad_norm_sq = options.exact_grad_norm && !sampler.full_batch()
                           ? objective.evaluate_full(result.params).gradient.model_part().squared_norm()
                           : eval.gradient.model_part().squared_norm();
    row.eta = optimizer.eta();
    optimizer.step(result.params, eval.gradient);
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(std::move(row));
  }
  return result;
}

TrainResult train_cl(const NetworkSpec& spec, const TapPlan& plan, const Dataset& data,
                     const OptimizerConfig& config, std::uint64_t seed,
                     const TrainOptions& options) {
  IsrObjective objective(spec, plan, data);
  return train_cl(objective, init_params(spec, plan, seed), config, seed, options);
}

ConstantsEstimate estimate_constants(Objective& objective, const ParamSet& centre,
                                     const ConstantsOptions& options) {
  if (options.probes < 2) throw ConfigError("estimate_constants needs at least two probes");
  std::vector<ParamSet> points{centre};
  for (std::size_t p = 0; p < options.probes; ++p) {
    Rng rng = make_rng(options.seed, Stream::probe, p);
    std::normal_distribution<double> normal;
    ParamSet dir = centre.zeros_like();
    for (auto& [name, entry] : dir) {
      for (double& v : entry.value.values()) v = normal(rng);
    }
    const double norm = std::sqrt(dir.squared_norm());
    ParamSet point = centre;
    if (norm > 0.0) point.axpy(options.radius / norm, dir);
    points.push_back(std::move(point));
  }

  ConstantsEstimate est;
  std::vector<ParamSet> grads;
  double lowest = INFINITY;
  double centre_loss = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    Evaluation full = objective.evaluate_full(points[p]);
    if (p == 0) centre_loss = full.loss.total;
    lowest = std::min(lowest, full.loss.total);
    est.grad_bound_sq = std::max(est.grad_bound_sq, full.gradient.squared_norm());

    BatchSampler sampler(objective.sample_count(), options.batch_size,
                         derive_seed(options.seed, Stream::probe, 1000 + p));
    double spread = 0.0;
    for (std::size_t b = 0; b < options.minibatches; ++b) {
      const auto batch = sampler.next();
      spread += (objective.evaluate(points[p], batch).gradient - full.gradient).squared_norm();
    }
    if (options.minibatches > 0) spread /= static_cast<double>(options.minibatches);
    est.variance = std::max(est.variance, spread);
    grads.push_back(std::move(full.gradient));
  }

  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double dist_sq = (points[i] - points[j]).squared_norm();
      if (dist_sq == 0.0) {
        ++est.skipped_pairs;
        continue;
      }
      const double ratio = std::sqrt((grads[i] - grads[j]).squared_norm() / dist_sq);
      est.smoothness = std::max(est.smoothness, ratio);
    }
  }
  if (options.best_seen) lowest = std::min(lowest, *options.best_seen);
  est.initial_gap = centre_loss - lowest;
  return est;
}

}  // namespace omniisr
