#include "omniisr/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <random>

#include "omniisr/errors.hpp"
#include "omniisr/rng.hpp"

namespace omniisr {

std::string to_string(PartitionKind kind) {
  switch (kind) {
    case PartitionKind::iid: return "iid";
    case PartitionKind::dirichlet: return "dirichlet";
    case PartitionKind::label_shard: return "label_shard";
  }
  return "iid";
}

PartitionKind partition_from_string(const std::string& text) {
  if (text == "iid") return PartitionKind::iid;
  if (text == "dirichlet") return PartitionKind::dirichlet;
  if (text == "label_shard") return PartitionKind::label_shard;
  throw ConfigError("unknown partition '" + text + "' (expected iid|dirichlet|label_shard)");
}

std::size_t FedConfig::participants() const {
  const auto count = static_cast<std::size_t>(std::llround(participation * static_cast<double>(clients)));
  return std::clamp<std::size_t>(count, 1, clients);
}

void FedConfig::validate() const {
  if (clients == 0) throw ConfigError("fed.clients must be positive");
  if (local_epochs == 0) throw ConfigError("fed.local_epochs must be at least 1");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("fed.participation must lie in (0, 1]");
  }
  if (rounds == 0) throw ConfigError("fed.rounds must be positive");
  if (partition == PartitionKind::dirichlet && !(concentration > 0.0)) {
    throw ConfigError("fed.concentration must be positive");
  }
  if (partition == PartitionKind::label_shard && classes_per_client == 0) {
    throw ConfigError("fed.classes_per_client must be positive");
  }
}

std::vector<double> size_weights(const std::vector<std::size_t>& sizes) {
  const double total = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  if (total == 0.0) throw ConfigError("client sizes sum to zero");
  std::vector<double> w;
  for (auto s : sizes) w.push_back(static_cast<double>(s) / total);
  return w;
}

namespace {

std::vector<std::size_t> even_sizes(std::size_t n, std::size_t parts) {
  std::vector<std::size_t> sizes(parts, n / parts);
  for (std::size_t i = 0; i < n % parts; ++i) ++sizes[i];
  return sizes;
}

std::vector<std::vector<std::size_t>> split_iid(std::size_t n, std::size_t clients, Rng& rng) {
  const auto order = permutation(n, rng);
  std::vector<std::vector<std::size_t>> out(clients);
  std::size_t cursor = 0;
  const auto sizes = even_sizes(n, clients);
  for (std::size_t c = 0; c < clients; ++c) {
    out[c].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                  order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[c]));
    cursor += sizes[c];
  }
  return out;
}

std::vector<std::vector<std::size_t>> split_dirichlet(const std::vector<std::uint32_t>& labels,
                                                      std::size_t classes, std::size_t clients,
                                                      double concentration, Rng& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<std::vector<double>> mix(clients, std::vector<double>(classes));
  for (auto& q : mix) {
    for (double& v : q) v = gamma(rng);
  }
  // Each sample of class k joins client n with probability proportional to
  // that client's share of class k.
  std::vector<std::discrete_distribution<std::size_t>> owner;
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<double> column(clients);
    double mass = 0.0;
    for (std::size_t n = 0; n < clients; ++n) mass += column[n] = mix[n][k];
    if (!(mass > 0.0)) column.assign(clients, 1.0);
    owner.emplace_back(column.begin(), column.end());
  }
  std::vector<std::vector<std::size_t>> out(clients);
  for (std::size_t i = 0; i < labels.size(); ++i) out[owner[labels[i]](rng)].push_back(i);
  return out;
}

std::vector<std::vector<std::size_t>> split_label_shard(const std::vector<std::uint32_t>& labels,
                                                        std::size_t clients, std::size_t per_client,
                                                        Rng& rng) {
  auto order = permutation(labels.size(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  const std::size_t count = clients * per_client;
  const auto sizes = even_sizes(labels.size(), count);
  std::vector<std::vector<std::size_t>> shards(count);
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < count; ++s) {
    shards[s].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                     order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[s]));
    cursor += sizes[s];
  }
  const auto deal = permutation(count, rng);
  std::vector<std::vector<std::size_t>> out(clients);
  for (std::size_t s = 0; s < count; ++s) {
    auto& dst = out[s / per_client];
    dst.insert(dst.end(), shards[deal[s]].begin(), shards[deal[s]].end());
  }
  return out;
}

}  // namespace

std::vector<ClientShard> partition(const Dataset& data, const FedConfig& config,
                                   std::uint64_t seed) {
  config.validate();
  if (config.clients > data.size()) {
    throw ConfigError("cannot split " + std::to_string(data.size()) + " samples over " +
                      std::to_string(config.clients) + " clients");
  }
  std::vector<std::uint32_t> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) labels[i] = data.dominant_label(i);

  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng = make_rng(seed, Stream::partition, attempt);
    std::vector<std::vector<std::size_t>> parts;
    switch (config.partition) {
      case PartitionKind::iid: parts = split_iid(data.size(), config.clients, rng); break;
      case PartitionKind::dirichlet:
        parts = split_dirichlet(labels, data.classes(), config.clients, config.concentration, rng);
        break;
      case PartitionKind::label_shard:
        parts = split_label_shard(labels, config.clients, config.classes_per_client, rng);
        break;
    }
    if (std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) continue;

    std::vector<std::size_t> sizes;
    for (const auto& p : parts) sizes.push_back(p.size());
    const auto weights = size_weights(sizes);
    std::vector<ClientShard> shards;
    for (std::size_t c = 0; c < parts.size(); ++c) {
      std::sort(parts[c].begin(), parts[c].end());
      shards.push_back(ClientShard{c, data.subset(parts[c]), weights[c]});
    }
    return shards;
  }
  throw ConfigError("partition left a client empty after 100 draws");
}

std::vector<Client> make_clients(const std::vector<ClientShard>& shards, const NetworkSpec& spec,
                                 const TapPlan& plan) {
  std::vector<Client> clients;
  for (const auto& s : shards) {
    clients.push_back(Client{s.id, s.weight, std::make_unique<IsrObjective>(spec, plan, s.data)});
  }
  return clients;
}

LocalUpdate local_update(Objective& objective, const ParamSet& global, std::size_t epochs,
                         const OptimizerConfig& opt, double eta, std::uint64_t sampler_seed) {
  if (epochs == 0) throw ConfigError("local update needs at least one epoch");
  OptimizerConfig local = opt;
  local.base_eta = eta;
  local.schedule = StepSchedule::constant;
  Optimizer optimizer(local);
  BatchSampler sampler(objective.sample_count(), opt.batch_size, sampler_seed);
  LocalUpdate out{global, {}, 0.0, 0};
  const std::size_t steps = epochs * sampler.batches_per_epoch();
  for (std::size_t s = 0; s < steps; ++s) {
    const auto batch = sampler.next();
    Evaluation eval = objective.evaluate(out.params, batch);
    if (!std::isfinite(eval.loss.total) || !eval.gradient.all_finite()) {
      throw TrainingAborted(s, "non-finite client loss at local step " + std::to_string(s));
    }
    out.mean_loss += eval.loss.total;
    optimizer.step(out.params, eval.gradient);
  }
  out.steps = steps;
  out.mean_loss /= static_cast<double>(steps);
  out.delta = out.params - global;
  return out;
}

ParamSet aggregate(const std::vector<const ParamSet*>& params, const std::vector<double>& weights) {
  if (params.empty() || params.size() != weights.size()) {
    throw ProtocolError("aggregate needs one weight per client update");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw ProtocolError("aggregation weights sum to zero");
  for (const auto* p : params) {
    if (!p->combinable_with(*params[0])) {
      throw ProtocolError("client updates have mismatched parameter names or shapes");
    }
  }
  ParamSet out = params[0]->zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) out.axpy(weights[i] / total, *params[i]);
  return out;
}

double heterogeneity(const std::vector<ParamSet>& gradients, const std::vector<double>& weights) {
  if (gradients.empty() || gradients.size() != weights.size()) {
    throw ProtocolError("heterogeneity needs one weight per client gradient");
  }
  std::vector<const ParamSet*> ptrs;
  for (const auto& g : gradients) ptrs.push_back(&g);
  const ParamSet mean = aggregate(ptrs, weights).model_part();
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double h = 0.0;
  for (std::size_t n = 0; n < gradients.size(); ++n) {
    h += weights[n] / total * (gradients[n].model_part() - mean).squared_norm();
  }
  return h;
}

std::vector<std::size_t> sample_participants(std::size_t clients, std::size_t count,
                                             std::uint64_t seed, std::size_t round) {
  if (count >= clients) {
    std::vector<std::size_t> all(clients);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  Rng rng = make_rng(seed, Stream::participants, round);
  auto order = permutation(clients, rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

std::uint64_t client_seed(std::uint64_t seed, std::size_t round, std::size_t client) {
  return derive_seed(seed, Stream::client, round, client);
}

namespace {

template <typename Fn>
void for_each_client(std::size_t count, bool parallel, Fn&& fn) {
  if (!parallel || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> tasks;
  for (std::size_t i = 0; i < count; ++i) tasks.push_back(std::async(std::launch::async, fn, i));
  for (auto& t : tasks) t.get();
}

}  // namespace

RoundResult fl_round(std::vector<Client>& clients, const ParamSet& global, const FedConfig& config,
                     const OptimizerConfig& opt, double eta, std::uint64_t seed, std::size_t round) {
  const std::size_t n = clients.size();
  if (n == 0) throw ConfigError("federation has no clients");
  RoundResult out;
  auto& diag = out.diagnostics;
  diag.round = round;
  diag.participants = sample_participants(n, config.participants(), seed, round);
  std::vector<char> active(n, 0);
  for (auto p : diag.participants) active[p] = 1;

  std::vector<ParamSet> grads(n);
  std::vector<double> losses(n);
  std::vector<LocalUpdate> updates(n);
  for_each_client(n, config.parallel, [&](std::size_t c) {
    Evaluation full = clients[c].objective->evaluate_full(global);
    grads[c] = std::move(full.gradient);
    losses[c] = full.loss.total;
    if (active[c]) {
      updates[c] = local_update(*clients[c].objective, global, config.local_epochs, opt, eta,
                                client_seed(seed, round, clients[c].id));
    }
  });

  std::vector<double> all_weights;
  for (const auto& c : clients) all_weights.push_back(c.weight);
  std::vector<const ParamSet*> grad_ptrs;
  for (const auto& g : grads) grad_ptrs.push_back(&g);
  diag.heterogeneity = heterogeneity(grads, all_weights);
  diag.grad_norm_sq = aggregate(grad_ptrs, all_weights).model_part().squared_norm();
  const double weight_total = std::accumulate(all_weights.begin(), all_weights.end(), 0.0);
  for (std::size_t c = 0; c < n; ++c) diag.mean_client_loss += all_weights[c] / weight_total * losses[c];
  diag.client_loss = losses;

  std::vector<const ParamSet*> params;
  std::vector<double> weights;
  for (auto p : diag.participants) {
    params.push_back(&updates[p].params);
    weights.push_back(clients[p].weight);
  }
  const double sampled = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    diag.drift += weights[i] / sampled * updates[diag.participants[i]].delta.model_part().squared_norm();
  }
  out.params = aggregate(params, weights);
  return out;
}

FlResult train_fl(std::vector<Client>& clients, ParamSet initial, const FedConfig& config,
                  const OptimizerConfig& opt, std::uint64_t seed) {
  config.validate();
  opt.validate();
  FlResult result{std::move(initial), {}};
  for (std::size_t t = 0; t < config.rounds; ++t) {
    RoundResult r = fl_round(clients, result.params, config, opt, opt.eta(), seed, t);
    result.params = std::move(r.params);
    result.rounds.push_back(std::move(r.diagnostics));
  }
  return result;
}

FlResult train_fl(const NetworkSpec& spec, const TapPlan& plan, const Dataset& data,
                  const FedConfig& config, const OptimizerConfig& opt, std::uint64_t seed) {
  auto clients = make_clients(partition(data, config, seed), spec, plan);
  return train_fl(clients, init_params(spec, plan, seed), config, opt, seed);
}

BenchmarkTask canonical_noniid_task(std::uint64_t seed) {
  BenchmarkTask task;
  task.spec = NetworkSpec{.input_channels = 8, .widths = {16, 16, 16, 16}, .classes = 4};
  task.isr = make_tap_plan(task.spec.depth(), 2, Placement::input, 1, 0.4, 0.1);
  task.data = gen_classification(4, 8, 240, 1.5, seed);
  task.fed = FedConfig{.clients = 4, .local_epochs = 1, .rounds = 30,
                       .partition = PartitionKind::dirichlet, .concentration = 0.3};
  task.opt = OptimizerConfig{.kind = OptimizerKind::sgd, .base_eta = 0.05, .iterations = 30,
                             .batch_size = 16};
  return task;
}

}  // namespace omniisr
