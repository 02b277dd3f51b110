#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "omniisr/data.hpp"
#include "omniisr/network.hpp"
#include "omniisr/param_set.hpp"
#include "omniisr/trainer.hpp"

namespace omniisr {

enum class PartitionKind { iid, dirichlet, label_shard };

std::string to_string(PartitionKind kind);
PartitionKind partition_from_string(const std::string& text);

struct FedConfig {
  std::size_t clients = 4;
  std::size_t local_epochs = 1;
  /// Fraction of clients sampled per round; at least one always participates.
  double participation = 1.0;
  std::size_t rounds = 30;
  PartitionKind partition = PartitionKind::dirichlet;
  double concentration = 0.3;
  std::size_t classes_per_client = 2;
  /// Run participants on separate threads. Results are identical either way.
  bool parallel = false;

  std::size_t participants() const;
  void validate() const;

  bool operator==(const FedConfig&) const = default;
};

struct ClientShard {
  std::size_t id = 0;
  Dataset data;
  double weight = 0.0;
};

/// Splits `data` into config.clients disjoint shards covering every sample.
///   iid:         shuffled, near-equal sizes
///   dirichlet:   client n draws class proportions q_n from Dir(concentration);
///                a sample of class k joins client n with probability
///                proportional to q_n[k], so client sizes vary
///   label_shard: samples sorted by label, cut into clients * classes_per_client
///                contiguous shards, dealt at random
/// Grid samples are classed by their dominant label. A draw with an empty
/// shard is repeated up to 100 times before a ConfigError.
std::vector<ClientShard> partition(const Dataset& data, const FedConfig& config,
                                   std::uint64_t seed);

/// Weights proportional to sizes, summing to one.
std::vector<double> size_weights(const std::vector<std::size_t>& sizes);

/// A participant: its aggregation weight and private objective.
struct Client {
  std::size_t id = 0;
  double weight = 0.0;
  std::unique_ptr<Objective> objective;
};

/// One IsrObjective client per shard.
std::vector<Client> make_clients(const std::vector<ClientShard>& shards, const NetworkSpec& spec,
                                 const TapPlan& plan);

struct LocalUpdate {
  ParamSet params;
  ParamSet delta;
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

/// `epochs` full passes of minibatch steps from `global`, with a fresh
/// optimizer at step size `eta`. Batches come from `sampler_seed`.
LocalUpdate local_update(Objective& objective, const ParamSet& global, std::size_t epochs,
                         const OptimizerConfig& opt, double eta, std::uint64_t sampler_seed);

/// Weighted mean of client parameters; weights are renormalized to sum to one.
ParamSet aggregate(const std::vector<const ParamSet*>& params, const std::vector<double>& weights);

/// sum_n w_n ||grad_n - sum_k w_k grad_k||^2 over main-network entries.
double heterogeneity(const std::vector<ParamSet>& gradients, const std::vector<double>& weights);

struct RoundDiagnostics {
  std::size_t round = 0;
  double drift = 0.0;
  double heterogeneity = 0.0;
  double grad_norm_sq = 0.0;
  double mean_client_loss = 0.0;
  std::vector<double> client_loss;
  std::vector<std::size_t> participants;
};

struct RoundResult {
  ParamSet params;
  RoundDiagnostics diagnostics;
};

/// Participants of round t: uniform without replacement, ascending ids.
std::vector<std::size_t> sample_participants(std::size_t clients, std::size_t count,
                                             std::uint64_t seed, std::size_t round);

/// Batch seed of client n in round t.
std::uint64_t client_seed(std::uint64_t seed, std::size_t round, std::size_t client);

/// Broadcast, local updates, aggregation. Diagnostics are taken at `global`
/// over all clients (heterogeneity, gradient norm, client losses) and over
/// participants (drift).
RoundResult fl_round(std::vector<Client>& clients, const ParamSet& global, const FedConfig& config,
                     const OptimizerConfig& opt, double eta, std::uint64_t seed, std::size_t round);

struct FlResult {
  ParamSet params;
  std::vector<RoundDiagnostics> rounds;
};

/// config.rounds federated rounds at step size opt.eta().
FlResult train_fl(std::vector<Client>& clients, ParamSet initial, const FedConfig& config,
                  const OptimizerConfig& opt, std::uint64_t seed);

/// Convenience form: partitions `data`, initializes the network from `seed`.
FlResult train_fl(const NetworkSpec& spec, const TapPlan& plan, const Dataset& data,
                  const FedConfig& config, const OptimizerConfig& opt, std::uint64_t seed);

/// The non-IID benchmark used for drift and heterogeneity studies: a 4-class
/// Gaussian mixture (8 dims, 240 samples, separation 1.5) on four Dirichlet(0.3)
/// clients, a 4-block width-16 network, SGD at 0.05 with batches of 16 and
/// 30 rounds of one local epoch. `isr` is the two-tap input-anchored plan
/// with weights 0.4 / 0.1.
struct BenchmarkTask {
  NetworkSpec spec;
  TapPlan isr;
  Dataset data;
  FedConfig fed;
  OptimizerConfig opt;
};

BenchmarkTask canonical_noniid_task(std::uint64_t seed);

}  // namespace omniisr
