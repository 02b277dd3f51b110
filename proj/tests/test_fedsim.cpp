#include <doctest.h>

#include <cmath>
#include <numeric>

#include "omniisr/errors.hpp"
#include "omniisr/fedsim.hpp"
#include "omniisr/rng.hpp"

using namespace omniisr;

namespace {

Dataset tiny(std::size_t n, std::size_t classes = 2) {
  Dataset data(classes, 1, 1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    const auto y = static_cast<std::uint32_t>(i % classes);
    data.add(std::span(&x, 1), std::span(&y, 1));
  }
  return data;
}

std::vector<Client> quadratic_clients(const std::vector<std::vector<std::vector<double>>>& centres,
                                      double curvature = 1.0) {
  std::vector<std::size_t> sizes;
  for (const auto& c : centres) sizes.push_back(c.size());
  const auto w = size_weights(sizes);
  std::vector<Client> clients;
  for (std::size_t n = 0; n < centres.size(); ++n) {
    clients.push_back(Client{n, w[n], std::make_unique<QuadraticObjective>(curvature, centres[n])});
  }
  return clients;
}

ParamSet vec(std::vector<double> v) {
  ParamSet p;
  p.insert("theta", Tensor::vector(std::move(v)));
  return p;
}

}  // namespace

TEST_CASE("iid partition of ten samples over two clients") {
  FedConfig cfg{.clients = 2, .partition = PartitionKind::iid};
  auto shards = partition(tiny(10), cfg, 1);
  REQUIRE(shards.size() == 2);
  CHECK(shards[0].data.size() == 5);
  CHECK(shards[1].data.size() == 5);
  CHECK(shards[0].weight == 0.5);
  CHECK(shards[1].weight == 0.5);
}

TEST_CASE("weights follow shard sizes") {
  const auto w = size_weights({2, 8});
  CHECK(w[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("partitions are deterministic disjoint covers") {
  auto data = gen_classification(4, 4, 203, 1.0, 3);
  for (auto kind : {PartitionKind::iid, PartitionKind::dirichlet, PartitionKind::label_shard}) {
    FedConfig cfg{.clients = 5, .partition = kind, .concentration = 0.2};
    auto a = partition(data, cfg, 9);
    auto b = partition(data, cfg, 9);
    std::size_t total = 0;
    double weight = 0.0;
    std::vector<std::vector<double>> seen;
    for (std::size_t c = 0; c < a.size(); ++c) {
      CHECK(a[c].data == b[c].data);
      CHECK(a[c].data.size() >= 1);
      total += a[c].data.size();
      weight += a[c].weight;
      for (std::size_t i = 0; i < a[c].data.size(); ++i) {
        auto x = a[c].data.input(i);
        seen.emplace_back(x.begin(), x.end());
      }
    }
    CHECK(total == data.size());
    CHECK(std::abs(weight - 1.0) <= 1e-12);
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  }
}

TEST_CASE("dirichlet partitions are label-skewed at low concentration") {
  double share = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto data = gen_classification(4, 4, 200, 1.0, seed);
    FedConfig cfg{.clients = 4, .partition = PartitionKind::dirichlet, .concentration = 0.1};
    for (const auto& shard : partition(data, cfg, seed)) {
      const auto hist = shard.data.class_counts();
      share += static_cast<double>(*std::max_element(hist.begin(), hist.end())) /
               static_cast<double>(shard.data.size());
      ++count;
    }
  }
  CHECK(share / static_cast<double>(count) > 0.7);
}

TEST_CASE("partition rejects more clients than samples") {
  FedConfig cfg{.clients = 11, .partition = PartitionKind::iid};
  CHECK_THROWS_AS(partition(tiny(10), cfg, 1), ConfigError);
}

TEST_CASE("label shards limit the labels each client sees") {
  FedConfig cfg{.clients = 4, .partition = PartitionKind::label_shard, .classes_per_client = 2};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& shard : partition(tiny(80, 4), cfg, seed)) {
      const auto hist = shard.data.class_counts();
      CHECK(std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; }) <= 2);
    }
  }
}

TEST_CASE("aggregation reference cases") {
  auto one = vec({1.5, -2.0});
  CHECK(aggregate({&one}, {0.3}) == one);
  auto zero = vec({0.0, 0.0, 0.0}), two = vec({2.0, 2.0, 2.0});
  CHECK(aggregate({&zero, &two}, {0.5, 0.5}) == vec({1.0, 1.0, 1.0}));
  auto a = vec({1.0}), b = vec({4.0}), c = vec({-2.0});
  const auto m = aggregate({&a, &b, &c}, {0.2, 0.5, 0.3});
  CHECK(m.at("theta")[0] == doctest::Approx(0.2 * 1 + 0.5 * 4 - 0.3 * 2).epsilon(1e-15));
  auto bad = vec({1.0, 2.0});
  CHECK_THROWS_AS(aggregate({&a, &bad}, {0.5, 0.5}), ProtocolError);
}

TEST_CASE("aggregation is affine-equivariant") {
  Rng rng(3);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ParamSet> sets;
    std::vector<double> w;
    for (int n = 0; n < 4; ++n) {
      sets.push_back(vec({normal(rng), normal(rng), normal(rng)}));
      w.push_back(std::abs(normal(rng)) + 0.1);
    }
    const double scale = normal(rng);
    const auto shift = vec({normal(rng), normal(rng), normal(rng)});
    std::vector<const ParamSet*> raw, moved;
    std::vector<ParamSet> transformed;
    for (auto& s : sets) transformed.push_back(scale * s + shift);
    for (std::size_t n = 0; n < sets.size(); ++n) {
      raw.push_back(&sets[n]);
      moved.push_back(&transformed[n]);
    }
    const auto expected = scale * aggregate(raw, w) + shift;
    CHECK(max_abs_difference(aggregate(moved, w), expected) < 1e-12);
  }
}

TEST_CASE("heterogeneity reference cases") {
  std::vector<ParamSet> same{vec({1.0, 2.0}), vec({1.0, 2.0})};
  CHECK(heterogeneity(same, {0.5, 0.5}) == 0.0);
  std::vector<ParamSet> opposite{vec({1.0, 0.0}), vec({-1.0, 0.0})};
  CHECK(heterogeneity(opposite, {0.5, 0.5}) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<ParamSet> three{vec({1.0, 3.0}), vec({-2.0, 0.5}), vec({0.0, -1.0})};
  std::vector<ParamSet> relabeled{three[2], three[0], three[1]};
  CHECK(heterogeneity(three, {0.2, 0.5, 0.3}) ==
        doctest::Approx(heterogeneity(relabeled, {0.3, 0.2, 0.5})).epsilon(1e-14));
}

TEST_CASE("local update reference cases") {
  QuadraticObjective obj(1.0, {{1.0}, {3.0}});
  OptimizerConfig opt{.base_eta = 0.1, .iterations = 1, .batch_size = 0};
  const auto start = vec({0.0});
  auto update = local_update(obj, start, 1, opt, 0.1, 5);
  auto cl = train_cl(obj, start, opt, 5);
  CHECK(update.params == cl.params);
  CHECK(update.steps == 1);
  CHECK(update.delta.at("theta")[0] == doctest::Approx(0.2));

  auto frozen = local_update(obj, start, 3, opt, 0.0, 5);
  CHECK(frozen.delta.squared_norm() == 0.0);

  QuadraticObjective twin(1.0, {{1.0}, {3.0}});
  OptimizerConfig mb{.base_eta = 0.1, .iterations = 1, .batch_size = 1};
  CHECK(local_update(obj, start, 2, mb, 0.1, 8).delta ==
        local_update(twin, start, 2, mb, 0.1, 8).delta);
}

TEST_CASE("one full-batch client with one epoch reproduces centralized training") {
  auto data = gen_classification(3, 6, 30, 2.0, 4);
  NetworkSpec spec{.input_channels = 6, .widths = {8, 8, 8}, .classes = 3};
  auto plan = make_tap_plan(3, 1, Placement::input, 1, 0.4, 0.1);
  OptimizerConfig opt{.base_eta = 0.1, .iterations = 20, .batch_size = 0};
  FedConfig fed{.clients = 1, .local_epochs = 1, .rounds = 20, .partition = PartitionKind::iid};
  auto cl = train_cl(spec, plan, data, opt, 7);
  std::vector<Client> clients;
  clients.push_back(Client{0, 1.0, std::make_unique<IsrObjective>(spec, plan, data)});
  auto fl = train_fl(clients, init_params(spec, plan, 7), fed, opt, 7);
  CHECK(max_abs_difference(cl.params, fl.params) <= 1e-12);
  REQUIRE(fl.rounds.size() == 20);
  for (std::size_t t = 0; t < 20; ++t) {
    CHECK(fl.rounds[t].heterogeneity == 0.0);
    CHECK(fl.rounds[t].mean_client_loss == doctest::Approx(cl.trace[t].loss.total).epsilon(1e-12));
  }
}

TEST_CASE("zero step size keeps the global model fixed") {
  auto clients = quadratic_clients({{{1.0}, {2.0}}, {{-3.0}}, {{5.0}, {0.0}, {1.0}}});
  FedConfig fed{.clients = 3, .local_epochs = 2, .rounds = 4};
  OptimizerConfig opt{.base_eta = 0.0, .iterations = 1, .batch_size = 1};
  auto result = train_fl(clients, vec({0.5}), fed, opt, 1);
  CHECK(result.params == vec({0.5}));
  for (const auto& r : result.rounds) {
    CHECK(r.drift == 0.0);
    CHECK(r.heterogeneity > 0.0);
  }
}

TEST_CASE("participation samples without replacement") {
  for (std::size_t t = 0; t < 20; ++t) {
    auto p = sample_participants(10, 4, 3, t);
    REQUIRE(p.size() == 4);
    CHECK(std::is_sorted(p.begin(), p.end()));
    CHECK(std::adjacent_find(p.begin(), p.end()) == p.end());
    CHECK(p.back() < 10);
  }
  CHECK((FedConfig{.clients = 10, .participation = 0.01}.participants()) == 1);
  CHECK_THROWS_AS((FedConfig{.participation = 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((FedConfig{.local_epochs = 0}.validate()), ConfigError);
}

TEST_CASE("parallel and sequential execution agree") {
  auto data = gen_gridseg(3, 4, 4, 40, 2, 3);
  NetworkSpec spec{.input_channels = 3, .widths = {6, 6, 6}, .classes = 3, .height = 4,
                   .width = 4, .pool_after = {1}};
  auto plan = make_tap_plan(3, 2, Placement::input, 1, 0.4, 0.1);
  OptimizerConfig opt{.base_eta = 0.05, .iterations = 1, .batch_size = 4};
  FedConfig fed{.clients = 4, .local_epochs = 2, .participation = 0.75, .rounds = 3};
  auto seq = train_fl(spec, plan, data, fed, opt, 5);
  fed.parallel = true;
  auto par = train_fl(spec, plan, data, fed, opt, 5);
  CHECK(seq.params == par.params);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(seq.rounds[t].drift == par.rounds[t].drift);
    CHECK(seq.rounds[t].heterogeneity == par.rounds[t].heterogeneity);
    CHECK(seq.rounds[t].participants == par.rounds[t].participants);
  }
}

TEST_CASE("client drift scales with the square of local epochs and step size") {
  // Full-batch quadratic clients: drift is close to eta^2 E^2 ||grad||^2.
  auto clients = quadratic_clients({{{4.0, 0.0}}, {{0.0, -4.0}}, {{-2.0, 3.0}}});
  OptimizerConfig opt{.base_eta = 0.002, .iterations = 1, .batch_size = 0};
  auto drift_at = [&](std::size_t epochs, double eta) {
    FedConfig fed{.clients = 3, .local_epochs = epochs, .rounds = 1};
    return fl_round(clients, vec({0.0, 0.0}), fed, opt, eta, 1, 0).diagnostics.drift;
  };
  const double e_slope = std::log(drift_at(8, 0.002) / drift_at(1, 0.002)) / std::log(8.0);
  const double eta_slope = std::log(drift_at(2, 0.008) / drift_at(2, 0.001)) / std::log(8.0);
  CHECK(e_slope == doctest::Approx(2.0).epsilon(0.05));
  CHECK(eta_slope == doctest::Approx(2.0).epsilon(0.05));
}
