#include <doctest.h>

#include <cmath>
#include <random>

#include "omniisr/errors.hpp"
#include "omniisr/hybrid.hpp"
#include "omniisr/rng.hpp"

using namespace omniisr;

namespace {

ParamSet vec(std::vector<double> v) {
  ParamSet p;
  p.insert("theta", Tensor::vector(std::move(v)));
  return p;
}

struct Setup {
  NetworkSpec spec{.input_channels = 6, .widths = {8, 8, 8}, .classes = 3};
  TapPlan plan = make_tap_plan(3, 1, Placement::input, 1, 0.4, 0.1);
  Dataset cloud = gen_classification(3, 6, 40, 2.0, 1);
  Dataset devices = gen_classification(3, 6, 80, 2.0, 2);
  FedConfig fed{.clients = 3, .local_epochs = 2, .participation = 0.67, .rounds = 20};
  OptimizerConfig opt{.base_eta = 0.05, .iterations = 20, .batch_size = 8};

  std::vector<Client> clients() const { return make_clients(partition(devices, fed, 5), spec, plan); }
};

}  // namespace

TEST_CASE("pseudo-gradient reference cases") {
  CHECK(pseudo_gradient(vec({1.0, 2.0}), vec({1.0, 2.0}), 0.3).squared_norm() == 0.0);
  CHECK(pseudo_gradient(vec({1.0}), vec({0.9}), 0.1).at("theta")[0] ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(pseudo_gradient(vec({1.0}), vec({0.9}), 0.0), DomainError);
}

TEST_CASE("pseudo-gradient of a one-client federation is that client's gradient") {
  QuadraticObjective obj(1.5, {{1.0, 2.0}, {3.0, -1.0}});
  std::vector<Client> clients;
  clients.push_back(Client{0, 1.0, std::make_unique<QuadraticObjective>(obj)});
  FedConfig fed{.clients = 1, .local_epochs = 1, .rounds = 1};
  OptimizerConfig opt{.base_eta = 0.1, .iterations = 1, .batch_size = 0};
  const auto theta = vec({0.5, 0.5});
  auto next = fl_round(clients, theta, fed, opt, 0.1, 3, 0).params;
  const auto g = obj.evaluate_full(theta).gradient;
  CHECK(max_abs_difference(pseudo_gradient(theta, next, 0.1), g) < 1e-12);
}

TEST_CASE("hybrid step reference cases") {
  const auto theta = vec({1.0, 1.0});
  const auto g_cl = vec({1.0, 0.0}), g_fl = vec({0.0, 1.0});
  auto half = hybrid_step(theta, g_cl, g_fl, 0.5, 0.1);
  CHECK(half.at("theta")[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(half.at("theta")[1] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(hybrid_step(theta, g_cl, g_fl, 1.0, 0.1) == theta - 0.1 * g_cl);
  const auto fed = vec({0.7, 1.2});
  auto pure_fl = hybrid_step(theta, g_cl, pseudo_gradient(theta, fed, 0.1), 0.0, 0.1);
  CHECK(max_abs_difference(pure_fl, fed) < 1e-15);
  CHECK_THROWS_AS(hybrid_step(theta, vec({1.0}), g_fl, 0.5, 0.1), ProtocolError);
}

TEST_CASE("alpha update rules") {
  CHECK(update_alpha(HybridSchedule::fixed(0.3), 0.3, -0.7) == 0.3);
  auto adaptive = HybridSchedule::adaptive(0.5, 0.2);
  CHECK(update_alpha(adaptive, 0.5, 1.0) == 0.5);
  CHECK(update_alpha(adaptive, 0.95, 0.0) == 1.0);
  CHECK(update_alpha(adaptive, 0.5, -1.0) == doctest::Approx(0.9));
  auto floored = HybridSchedule::adaptive(0.5, 0.2, 0.25);
  CHECK(update_alpha(floored, 0.1, 1.0) == 0.25);
  CHECK(update_alpha(HybridSchedule::alternating(), 1.0, 0.3) == 0.0);
  CHECK(update_alpha(HybridSchedule::alternating(), 0.0, 0.3) == 1.0);
  CHECK_THROWS_AS((HybridSchedule{MixingRegime::fixed, 0.1, 0.0, 0.2}.validate()), ConfigError);
  CHECK(regime_from_string(to_string(MixingRegime::alternating)) == MixingRegime::alternating);
}

TEST_CASE("alpha stays in [alpha_min, 1] and never drops when similarity is below one") {
  Rng rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    HybridSchedule s = HybridSchedule::adaptive(unit(rng), unit(rng), 0.5 * unit(rng));
    double alpha = s.initial();
    for (int t = 0; t < 20; ++t) {
      const double sim = 2.0 * unit(rng) - 1.0;
      const double next = update_alpha(s, alpha, sim);
      CHECK(next >= s.alpha_min);
      CHECK(next <= 1.0);
      CHECK(next >= alpha);
      alpha = next;
    }
    HybridSchedule alt{MixingRegime::alternating, 1.0, 0.0, s.alpha_min};
    alpha = alt.initial();
    for (int t = 0; t < 5; ++t) {
      alpha = update_alpha(alt, alpha, 0.0);
      CHECK(alpha >= alt.alpha_min);
    }
  }
}

TEST_CASE("fixed(1) reproduces centralized training on the cloud data") {
  Setup s;
  IsrObjective cloud(s.spec, s.plan, s.cloud);
  auto clients = s.clients();
  const auto init = init_params(s.spec, s.plan, 9);
  auto hybrid = train_hybrid(cloud, clients, init, s.fed, HybridSchedule::fixed(1.0), s.opt, 9);
  auto cl = train_cl(cloud, init, s.opt, 9);
  CHECK(max_abs_difference(hybrid.params, cl.params) <= 1e-12);
}

TEST_CASE("fixed(0) reproduces federated training") {
  Setup s;
  IsrObjective cloud(s.spec, s.plan, s.cloud);
  auto clients = s.clients();
  auto fl_clients = s.clients();
  const auto init = init_params(s.spec, s.plan, 9);
  auto hybrid = train_hybrid(cloud, clients, init, s.fed, HybridSchedule::fixed(0.0), s.opt, 9);
  auto fl = train_fl(fl_clients, init, s.fed, s.opt, 9);
  CHECK(max_abs_difference(hybrid.params, fl.params) <= 1e-12);
  for (std::size_t t = 0; t < s.fed.rounds; ++t) {
    CHECK(hybrid.rounds[t].fed.participants == fl.rounds[t].participants);
  }
}

TEST_CASE("alternating schedule interleaves centralized and federated rounds") {
  Setup s;
  s.fed.rounds = 8;
  IsrObjective cloud(s.spec, s.plan, s.cloud);
  auto clients = s.clients();
  auto manual_clients = s.clients();
  const auto init = init_params(s.spec, s.plan, 4);
  auto hybrid = train_hybrid(cloud, clients, init, s.fed, HybridSchedule::alternating(), s.opt, 4);

  ParamSet theta = init;
  BatchSampler sampler = cl_sampler(cloud.sample_count(), s.opt.batch_size, 4);
  for (std::size_t t = 0; t < s.fed.rounds; ++t) {
    const auto batch = sampler.next();
    if (t % 2 == 0) {
      theta.axpy(-s.opt.eta(), cloud.evaluate(theta, batch).gradient);
    } else {
      theta = fl_round(manual_clients, theta, s.fed, s.opt, s.opt.eta(), 4, t).params;
    }
    CHECK(hybrid.rounds[t].alignment.alpha == (t % 2 == 0 ? 1.0 : 0.0));
  }
  CHECK(max_abs_difference(hybrid.params, theta) <= 1e-12);
}

TEST_CASE("adaptive hybrid records bounded cosines and valid alphas") {
  Setup s;
  auto result = train_hybrid(s.spec, s.plan, s.cloud, s.devices, s.fed,
                             HybridSchedule::adaptive(0.3, 0.2, 0.1), s.opt, 2);
  REQUIRE(result.rounds.size() == s.fed.rounds);
  for (const auto& r : result.rounds) {
    CHECK(std::abs(r.alignment.cosine) <= 1.0);
    CHECK(r.alignment.alpha >= 0.1);
    CHECK(r.alignment.alpha <= 1.0);
    CHECK(std::isfinite(r.cloud_loss.total));
  }
}

TEST_CASE("alignment of vanishing gradients counts as agreement") {
  auto r = measure_alignment(vec({0.0, 0.0}), vec({1.0, 2.0}));
  CHECK(r.cosine == 1.0);
  CHECK(r.inner == 0.0);
  auto opposite = measure_alignment(vec({1.0, 0.0}), vec({-2.0, 0.0}));
  CHECK(opposite.cosine == -1.0);
}

TEST_CASE("noiseless alignment probe equals the decomposition") {
  AlignmentScenario clean{{2.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  auto est = alignment_probe(clean, 10, 1, 0);
  CHECK(est.mean == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(est.standard_error == 0.0);

  AlignmentScenario biased{{2.0, 0.0}, {0.1, 0.0}, {0.1, 0.0}};
  CHECK(biased.expected_inner() == doctest::Approx(4.41).epsilon(1e-14));
  CHECK(alignment_probe(biased, 10, 1, 0).mean == doctest::Approx(4.41).epsilon(1e-14));
}

TEST_CASE("noisy alignment probe is unbiased and positive at low bias") {
  AlignmentScenario s{{1.0, -0.5, 0.25}, {0.2, 0.1, 0.0}, {-0.1, 0.2, 0.1}, 1.0, 1.5};
  REQUIRE(s.bias_ratio() <= 0.5);
  auto est = alignment_probe(s, 20000, 7, 200);
  CHECK(std::abs(est.mean - s.expected_inner()) <= 3.0 * est.standard_error);
  CHECK(est.mean > 0.0);
  CHECK(est.positive_confidence >= 0.99);
  CHECK(est.records.size() == 16);
}
