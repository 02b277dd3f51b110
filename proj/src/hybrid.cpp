#include "omniisr/hybrid.hpp"

#include <algorithm>
#include <cmath>

#include "omniisr/errors.hpp"
#include "omniisr/rng.hpp"

namespace omniisr {

std::string to_string(MixingRegime regime) {
  switch (regime) {
    case MixingRegime::alternating: return "alternating";
    case MixingRegime::fixed: return "fixed";
    case MixingRegime::adaptive: return "adaptive";
  }
  return "adaptive";
}

MixingRegime regime_from_string(const std::string& text) {
  if (text == "alternating") return MixingRegime::alternating;
  if (text == "fixed") return MixingRegime::fixed;
  if (text == "adaptive") return MixingRegime::adaptive;
  throw ConfigError("unknown mixing regime '" + text + "' (expected alternating|fixed|adaptive)");
}

double HybridSchedule::initial() const {
  return regime == MixingRegime::alternating ? 1.0 : std::max(alpha0, alpha_min);
}

void HybridSchedule::validate() const {
  if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw ConfigError("hybrid.alpha0 must lie in [0, 1]");
  if (!(alpha_min >= 0.0 && alpha_min <= 1.0)) {
    throw ConfigError("hybrid.alpha_min must lie in [0, 1]");
  }
  if (!(beta >= 0.0)) throw ConfigError("hybrid.beta must be non-negative");
  if (regime == MixingRegime::fixed && alpha0 < alpha_min) {
    throw ConfigError("fixed hybrid alpha is below alpha_min");
  }
}

double update_alpha(const HybridSchedule& schedule, double alpha, double similarity) {
  double next = alpha;
  switch (schedule.regime) {
    case MixingRegime::fixed: next = schedule.alpha0; break;
    case MixingRegime::alternating: next = alpha >= 0.5 ? 0.0 : 1.0; break;
    case MixingRegime::adaptive:
      next = std::clamp(alpha + schedule.beta * (1.0 - similarity), 0.0, 1.0);
      break;
  }
  return std::max(next, schedule.alpha_min);
}

ParamSet pseudo_gradient(const ParamSet& theta, const ParamSet& theta_fed, double eta) {
  if (eta == 0.0) throw DomainError("pseudo-gradient needs a non-zero step size");
  ParamSet g = theta - theta_fed;
  for (auto& [name, entry] : g) {
    for (double& v : entry.value.values()) v /= eta;
  }
  return g;
}

ParamSet hybrid_step(const ParamSet& theta, const ParamSet& g_cl, const ParamSet& g_fl,
                     double alpha, double eta) {
  if (!theta.combinable_with(g_cl) || !theta.combinable_with(g_fl)) {
    throw ProtocolError("hybrid step: parameter and gradient sets differ");
  }
  ParamSet mixed = alpha * g_cl;
  mixed.axpy(1.0 - alpha, g_fl);
  ParamSet out = theta;
  out.axpy(-eta, mixed);
  return out;
}

AlignmentRecord measure_alignment(const ParamSet& g_cl, const ParamSet& g_fl) {
  const ParamSet a = g_cl.model_part(), b = g_fl.model_part();
  AlignmentRecord r;
  r.inner = a.dot(b);
  r.norm_cl = std::sqrt(a.squared_norm());
  r.norm_fl = std::sqrt(b.squared_norm());
  if (r.norm_cl > 0.0 && r.norm_fl > 0.0) {
    r.cosine = std::clamp(r.inner / (r.norm_cl * r.norm_fl), -1.0, 1.0);
  }
  return r;
}

HybridResult train_hybrid(Objective& cloud, std::vector<Client>& clients, ParamSet initial,
                          const FedConfig& fed, const HybridSchedule& schedule,
                          const OptimizerConfig& opt, std::uint64_t seed) {
  fed.validate();
  schedule.validate();
  opt.validate();
  const double eta = opt.eta();
  if (!(eta > 0.0)) throw ConfigError("hybrid training needs a positive step size");
  const double decay = opt.effective_weight_decay();
  BatchSampler sampler = cl_sampler(cloud.sample_count(), opt.batch_size, seed);
  HybridResult result{std::move(initial), {}};
  double alpha = schedule.initial();
  for (std::size_t t = 0; t < fed.rounds; ++t) {
    const auto batch = sampler.next();
    Evaluation eval = cloud.evaluate(result.params, batch);
    if (!std::isfinite(eval.loss.total) || !eval.gradient.all_finite()) {
      throw TrainingAborted(t, "non-finite cloud loss in hybrid round " + std::to_string(t));
    }
    ParamSet g_cl = std::move(eval.gradient);
    if (decay != 0.0) g_cl.axpy(decay, result.params);

    RoundResult fl = fl_round(clients, result.params, fed, opt, eta, seed, t);
    const ParamSet g_fl = pseudo_gradient(result.params, fl.params, eta);

    HybridRound round;
    round.alignment = measure_alignment(g_cl, g_fl);
    round.alignment.round = t;
    round.alignment.alpha = alpha;
    round.cloud_loss = eval.loss;
    round.fed = std::move(fl.diagnostics);
    result.params = hybrid_step(result.params, g_cl, g_fl, alpha, eta);
    alpha = update_alpha(schedule, alpha, round.alignment.cosine);
    result.rounds.push_back(std::move(round));
  }
  return result;
}

HybridResult train_hybrid(const NetworkSpec& spec, const TapPlan& plan, const Dataset& cloud_data,
                          const Dataset& device_data, const FedConfig& fed,
                          const HybridSchedule& schedule, const OptimizerConfig& opt,
                          std::uint64_t seed) {
  IsrObjective cloud(spec, plan, cloud_data);
  auto clients = make_clients(partition(device_data, fed, seed), spec, plan);
  return train_hybrid(cloud, clients, init_params(spec, plan, seed), fed, schedule, opt, seed);
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double AlignmentScenario::expected_inner() const {
  std::vector<double> both(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) both[i] = bias_cl[i] + bias_fl[i];
  return dot(grad, grad) + dot(grad, both) + dot(bias_cl, bias_fl);
}

double AlignmentScenario::bias_ratio() const {
  return (std::sqrt(dot(bias_cl, bias_cl)) + std::sqrt(dot(bias_fl, bias_fl))) /
         std::sqrt(dot(grad, grad));
}

AlignmentEstimate alignment_probe(const AlignmentScenario& s, std::size_t draws,
                                  std::uint64_t seed, std::size_t bootstrap,
                                  std::size_t keep_records) {
  const std::size_t d = s.grad.size();
  if (d == 0 || s.bias_cl.size() != d || s.bias_fl.size() != d) {
    throw ConfigError("alignment scenario vectors must share a positive dimension");
  }
  if (draws < 2) throw ConfigError("alignment probe needs at least two draws");
  Rng rng = make_rng(seed, Stream::trial, 0);
  std::normal_distribution<double> normal;
  const double scale_cl = s.sigma_cl / std::sqrt(static_cast<double>(d));
  const double scale_fl = s.sigma_fl / std::sqrt(static_cast<double>(d));

  AlignmentEstimate est;
  est.draws = draws;
  est.expected = s.expected_inner();
  std::vector<double> inner(draws);
  std::vector<double> gc(d), gf(d);
  for (std::size_t k = 0; k < draws; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      gc[i] = s.grad[i] + s.bias_cl[i] + scale_cl * normal(rng);
      gf[i] = s.grad[i] + s.bias_fl[i] + scale_fl * normal(rng);
    }
    inner[k] = dot(gc, gf);
    if (k < keep_records) {
      AlignmentRecord r;
      r.round = k;
      r.inner = inner[k];
      r.norm_cl = std::sqrt(dot(gc, gc));
      r.norm_fl = std::sqrt(dot(gf, gf));
      if (r.norm_cl > 0.0 && r.norm_fl > 0.0) {
        r.cosine = std::clamp(r.inner / (r.norm_cl * r.norm_fl), -1.0, 1.0);
      }
      est.records.push_back(r);
    }
  }
  double sum = 0.0;
  for (double v : inner) sum += v;
  est.mean = sum / static_cast<double>(draws);
  double ss = 0.0;
  for (double v : inner) ss += (v - est.mean) * (v - est.mean);
  est.standard_error = std::sqrt(ss / static_cast<double>(draws - 1) / static_cast<double>(draws));

  if (bootstrap > 0) {
    Rng boot = make_rng(seed, Stream::trial, 1);
    std::uniform_int_distribution<std::size_t> pick(0, draws - 1);
    std::size_t positive = 0;
    for (std::size_t b = 0; b < bootstrap; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < draws; ++k) acc += inner[pick(boot)];
      positive += acc > 0.0;
    }
    est.positive_confidence = static_cast<double>(positive) / static_cast<double>(bootstrap);
  }
  return est;
}

}  // namespace omniisr
