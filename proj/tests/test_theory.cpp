#include <doctest.h>

#include <cmath>
#include <random>

#include "omniisr/errors.hpp"
#include "omniisr/rng.hpp"
#include "omniisr/theory.hpp"
#include "omniisr/trainer.hpp"

using namespace omniisr;

namespace {

TheoryInputs unit_inputs() {
  TheoryInputs in;
  in.initial_gap = 1.0;
  in.eta = 1.0;
  in.smoothness = 1.0;
  in.grad_bound_sq = 0.6;
  in.variance = 0.4;
  in.iterations = 100.0;
  return in;
}

double relative(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Random inputs with every field in a plausible range.
TheoryInputs random_inputs(Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 3.0);
  TheoryInputs in;
  in.smoothness = u(rng);
  in.grad_bound_sq = u(rng);
  in.variance = u(rng);
  in.initial_gap = u(rng);
  in.eta = u(rng) * 0.1;
  in.iterations = 10.0 + 1000.0 * u(rng);
  in.local_epochs = std::floor(1.0 + 3.0 * u(rng));
  in.heterogeneity = u(rng);
  in.drift_constant = u(rng);
  in.bound_constant = u(rng);
  in.alpha_min = std::min(1.0, u(rng) / 3.0);
  in.bias_eff = u(rng) * 0.2;
  in.variance_eff = u(rng);
  return in;
}

}  // namespace

TEST_CASE("centralized bound on hand-checked inputs") {
  auto in = unit_inputs();
  auto r = bound_cl(in);
  CHECK(r.initial_gap == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r.variance == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(r.total == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(r.feasible);

  in.initial_gap = 0.0;
  CHECK(bound_cl(in).initial_gap == 0.0);

  in = unit_inputs();
  auto doubled = in;
  doubled.iterations *= 2.0;
  CHECK(bound_cl(doubled).total == doctest::Approx(r.total / std::sqrt(2.0)).epsilon(1e-14));

  in.smoothness = 20.0;  // L eta = 20 > sqrt(T) = 10
  auto bad = bound_cl(in);
  CHECK_FALSE(bad.feasible);
  CHECK(bad.total > 0.0);
}

TEST_CASE("federated bound reduces to the centralized one without drift") {
  auto in = unit_inputs();
  in.heterogeneity = 0.0;
  auto fl = bound_fl(in, {.suppress_gradient_term = true});
  auto cl = bound_cl(in);
  CHECK(fl.total == cl.total);
  CHECK(fl.drift == 0.0);
}

TEST_CASE("federated drift term by independent recomputation") {
  TheoryInputs in;
  in.smoothness = 2.0;
  in.eta = 0.05;
  in.iterations = 400.0;
  in.initial_gap = 3.0;
  in.grad_bound_sq = 1.5;
  in.variance = 0.5;
  in.local_epochs = 2.0;
  in.heterogeneity = 4.0;
  in.drift_constant = 0.5;
  // root T = 20; gap = 6 / (0.05 * 20) = 6; variance = 2*0.05*2/20 = 0.01
  // k = 2 * 0.05 * 0.5 * 4 / 20 = 0.01
  // fixed point A = (6.01 + 0.01 * 4) / 0.99
  const double a = (6.01 + 0.04) / 0.99;
  auto r = bound_fl(in);
  CHECK(r.initial_gap == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(r.variance == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(r.drift == doctest::Approx(0.01 * (a + 4.0)).epsilon(1e-13));
  CHECK(r.total == doctest::Approx(a).epsilon(1e-13));
  CHECK(r.seed_total == doctest::Approx(6.01).epsilon(1e-14));
  CHECK(r.first_pass == doctest::Approx(6.01 + 0.01 * (6.01 + 4.0)).epsilon(1e-14));
  // The drift-control condition L eta sqrt(T) c E^2 = 4 fails here.
  CHECK_FALSE(r.feasible);

  in.eta = 0.001;
  in.iterations = 4.0;  // 2 * 0.001 * 2 * 0.5 * 4 = 0.008 < 1
  CHECK(bound_fl(in).feasible);
}

TEST_CASE("drift term scales with the square of local epochs") {
  auto in = unit_inputs();
  in.heterogeneity = 5.0;
  FlBoundOptions het_only{.suppress_gradient_term = true};
  const double d1 = bound_fl(in, het_only).drift;
  in.local_epochs = 2.0;
  CHECK(bound_fl(in, het_only).drift == doctest::Approx(4.0 * d1).epsilon(1e-14));
}

TEST_CASE("effective quantities") {
  TheoryInputs in;
  in.variance_cl = 1.0;
  in.variance_fl = 4.0;
  auto q = effective_quantities(in, {0.5, 0.3, 0.9});
  CHECK(q.alpha_min == 0.3);
  CHECK(q.variance == doctest::Approx(2.05).epsilon(1e-14));

  const std::vector<double> b{0.3, -0.4};
  for (double a : {0.0, 0.2, 0.7, 1.0}) {
    auto same = effective_quantities(in, {a}, b, b);
    CHECK(same.bias == doctest::Approx(0.5).epsilon(1e-14));
  }
  const std::vector<double> minus{-0.3, 0.4};
  CHECK(effective_quantities(in, {0.5}, b, minus).bias == 0.0);
  CHECK(effective_quantities(in, {0.5, 1.0}, b, minus).bias == doctest::Approx(0.5));

  in.bias_cl = 1.0;
  in.bias_fl = 3.0;
  CHECK(effective_quantities(in, {0.25, 0.5}).bias == doctest::Approx(2.5));
  CHECK_THROWS_AS(effective_quantities(in, {}), DomainError);
}

TEST_CASE("hybrid bound terms, floor and feasibility") {
  TheoryInputs in;
  in.bound_constant = 2.0;
  in.initial_gap = 1.0;
  in.alpha_min = 0.5;
  in.eta = 0.1;
  in.iterations = 100.0;
  in.variance_eff = 3.0;
  in.bias_eff = 0.2;
  auto r = bound_hybrid(in);
  CHECK(r.initial_gap == doctest::Approx(2.0 / (0.5 * 0.1 * 10.0)).epsilon(1e-14));
  CHECK(r.variance == doctest::Approx(2.0 * 0.1 * 3.0 / 10.0).epsilon(1e-14));
  CHECK(r.bias_floor == doctest::Approx(0.08).epsilon(1e-14));
  CHECK(r.total == r.initial_gap + r.variance + r.drift + r.bias_floor);
  CHECK(r.feasible);

  double previous = r.total;
  for (double t : {1e3, 1e4, 1e6, 1e9, 1e12, 1e16}) {
    in.iterations = t;
    auto next = bound_hybrid(in);
    CHECK(next.total <= previous);
    previous = next.total;
  }
  CHECK(previous == doctest::Approx(0.08).epsilon(1e-6));

  in.bias_eff = 0.0;
  in.iterations = 100.0;
  const double at100 = bound_hybrid(in).total;
  in.iterations = 400.0;
  CHECK(bound_hybrid(in).total == doctest::Approx(at100 / 2.0).epsilon(1e-14));

  in.alpha_min = 0.0;
  CHECK_FALSE(bound_hybrid(in).feasible);
  in.alpha_min = 0.5;
  in.smoothness = 60.0;  // L eta = 6 > sqrt(400) / 4 = 5
  CHECK_FALSE(bound_hybrid(in).feasible);
}

TEST_CASE("centralized complexity on hand-checked inputs") {
  auto in = unit_inputs();
  auto c = complexity(BoundMode::cl, in, 0.1);
  CHECK(c.sqrt_iterations == doctest::Approx(30.0).epsilon(1e-14));
  CHECK(c.iterations == doctest::Approx(900.0).epsilon(1e-14));
  CHECK(c.rounds == 900);
  in.iterations = 900.0;
  CHECK(bound_cl(in).total == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(complexity(BoundMode::cl, in, 0.0), DomainError);
}

TEST_CASE("property: complexity inverts the centralized and federated bounds") {
  Rng rng(20);
  std::uniform_real_distribution<double> eps(0.01, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    auto in = random_inputs(rng);
    const double epsilon = eps(rng);
    for (bool suppress : {false, true}) {
      FlBoundOptions opt{.suppress_gradient_term = suppress, .kappa = trial % 2 ? 0.5 : 1.0};
      auto c = complexity(BoundMode::fl, in, epsilon, opt);
      in.iterations = c.iterations;
      CHECK(relative(bound_fl(in, opt).total, epsilon) < 1e-9);
    }
    auto c = complexity(BoundMode::cl, in, epsilon);
    in.iterations = c.iterations;
    CHECK(relative(bound_cl(in).total, epsilon) < 1e-9);
  }
}

TEST_CASE("property: hybrid complexity is infeasible exactly at or below the floor") {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    auto in = random_inputs(rng);
    const double floor = in.bound_constant * in.bias_eff * in.bias_eff;
    CHECK_FALSE(complexity(BoundMode::hybrid, in, floor).feasible);
    CHECK(complexity(BoundMode::hybrid, in, floor).reason == "below bias floor");
    CHECK_FALSE(complexity(BoundMode::hybrid, in, floor * 0.5 + 1e-300).feasible);
    const double above = floor + 0.1;
    auto c = complexity(BoundMode::hybrid, in, above);
    REQUIRE(c.feasible);
    in.iterations = c.iterations;
    CHECK(relative(bound_hybrid(in).total, above) < 1e-9);
    CHECK(c.order_estimate > 0.0);
  }
}

TEST_CASE("heterogeneity contraction shortens the federated count") {
  auto in = unit_inputs();
  in.heterogeneity = 1e6;
  in.local_epochs = 1.0;
  // With eta tuned, the count is linear in the heterogeneity budget.
  const double t1 = complexity_tuned_eta(BoundMode::fl, in, 0.1, {.kappa = 1.0}).iterations;
  const double t_half = complexity_tuned_eta(BoundMode::fl, in, 0.1, {.kappa = 0.5}).iterations;
  CHECK(t_half / t1 == doctest::Approx(0.5).epsilon(1e-5));
  // At a fixed eta the heterogeneity enters sqrt(T), so the ratio approaches 1/4.
  const double f1 = complexity(BoundMode::fl, in, 0.1, {.kappa = 1.0}).iterations;
  const double f_half = complexity(BoundMode::fl, in, 0.1, {.kappa = 0.5}).iterations;
  CHECK(f_half / f1 == doctest::Approx(0.25).epsilon(1e-4));

  double eta = 0.0;
  auto tuned = complexity_tuned_eta(BoundMode::cl, unit_inputs(), 0.1, {}, &eta);
  auto at_best = unit_inputs();
  at_best.eta = eta;
  CHECK(complexity(BoundMode::cl, at_best, 0.1).iterations ==
        doctest::Approx(tuned.iterations).epsilon(1e-12));
  CHECK(tuned.iterations <= complexity(BoundMode::cl, unit_inputs(), 0.1).iterations);
}

TEST_CASE("escape time closed form") {
  auto in = default_escape_inputs();
  in.curvature = 0.1;
  in.eta = 0.01;
  in.radius = 10.0;
  in.delta = 0.1;
  in.initial_offset = 0.5;
  in.variance_eff = 0.01;
  const double c_sigma = 0.1 / std::sqrt(0.001) * std::sqrt(std::log(20.0));
  CHECK(c_sigma == doctest::Approx(5.473).epsilon(1e-3));
  const double denominator = 0.5 - 0.01 * c_sigma;
  CHECK(denominator == doctest::Approx(0.4453).epsilon(1e-3));
  auto t = escape_time(in);
  REQUIRE(t);
  CHECK(*t == doctest::Approx(1000.0 * std::log(10.0 / denominator)).epsilon(1e-14));
  CHECK(*t == doctest::Approx(3112.0).epsilon(1e-3));

  auto zero = in;
  zero.variance_eff = 0.0;
  zero.initial_offset = 10.0;  // y0 = C0 R
  REQUIRE(escape_time(zero));
  CHECK(*escape_time(zero) == 0.0);
  zero.initial_offset = 10.5;  // log argument below 1
  CHECK_FALSE(escape_time(zero));

  auto tiny = in;
  tiny.curvature = 1e-5;
  CHECK_FALSE(escape_time(tiny));

  tiny.curvature = 0.0;
  CHECK_THROWS_AS(escape_time(tiny), DomainError);
}

TEST_CASE("property: escape time monotonicity where defined") {
  Rng rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    auto in = default_escape_inputs();
    in.curvature = 0.01 + u(rng);
    in.eta = 0.001 + 0.05 * u(rng);
    in.radius = 1.0 + 100.0 * u(rng);
    in.variance_eff = 0.05 * u(rng);
    in.bias_eff = 0.05 * u(rng);
    in.delta = 0.01 + 0.5 * u(rng);
    auto base = escape_time(in);
    if (!base) continue;
    auto bigger = [&](double TheoryInputs::*field, double factor) {
      auto next = in;
      next.*field *= factor;
      return escape_time(next);
    };
    auto r = bigger(&TheoryInputs::radius, 1.5);
    REQUIRE(r);
    CHECK(*r >= *base);
    auto g = bigger(&TheoryInputs::curvature, 1.5);
    REQUIRE(g);
    CHECK(*g <= *base);
    if (auto b = bigger(&TheoryInputs::bias_eff, 1.5)) CHECK(*b >= *base);
    if (auto s = bigger(&TheoryInputs::variance_eff, 1.5)) CHECK(*s >= *base);
  }
}

TEST_CASE("escape sweep panel shapes on the default grid") {
  EscapeSweepConfig cfg;
  auto rows = escape_sweep(cfg);
  const std::size_t k = cfg.curvatures.size();
  CHECK(rows.size() == k * (1 + cfg.etas.size() + cfg.radii.size() + cfg.deltas.size()));
  auto shapes = escape_shapes(rows);
  CHECK(shapes.decreasing_in_curvature);
  for (const auto& [gamma, found] : shapes.interior_eta_minimum)
    if (gamma <= 0.05) CHECK(found);
  for (const auto& [gamma, r2] : shapes.log_radius_r2) CHECK(r2 > 0.999);
  for (const auto& [gamma, variation] : shapes.delta_variation)
    if (gamma >= 0.1) CHECK(variation < 0.05);
}

TEST_CASE("log grid endpoints and spacing") {
  auto g = log_grid(1e-3, 1.0, 4);
  REQUIRE(g.size() == 4);
  CHECK(g.front() == 1e-3);
  CHECK(g.back() == 1.0);
  CHECK(g[1] == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK_THROWS_AS(log_grid(0.0, 1.0, 3), DomainError);
}

TEST_CASE("noise-free saddle runs") {
  SaddleConfig cfg;
  cfg.noise = {{1.0, 0.0}};
  cfg.trials = 100;
  cfg.initial_offset = 0.0;
  cfg.max_steps = 5000;
  auto stuck = saddle_sim(cfg);
  CHECK(stuck.censored == 100);
  CHECK_FALSE(stuck.median());

  for (double y0 : {0.3, 0.5, 1.7}) {
    cfg.initial_offset = y0;
    cfg.max_steps = 100000;
    auto r = saddle_sim(cfg);
    REQUIRE(r.censored == 0);
    const double exact = std::log(cfg.radius / y0) / std::log1p(cfg.eta * cfg.curvature);
    CHECK(r.times.front() == r.times.back());
    CHECK(r.times.front() == std::ceil(exact));
  }
  cfg.trials = 10;
  CHECK_THROWS_AS(saddle_sim(cfg), ConfigError);
}

TEST_CASE("saddle simulation is reproducible and thread-count independent") {
  SaddleConfig cfg;
  cfg.trials = 200;
  cfg.noise = {{0.5, 0.1}, {0.5, 0.3}};
  cfg.initial_offset = 0.01;
  cfg.seed = 9;
  auto a = saddle_sim(cfg);
  cfg.parallel = true;
  auto b = saddle_sim(cfg);
  CHECK(a.times == b.times);
  CHECK(a.censored == b.censored);
}

TEST_CASE("stronger mixed noise escapes sooner from near the saddle") {
  SaddleConfig single;
  single.initial_offset = 0.01;
  single.noise = {{0.5, 0.1}, {0.5, 0.1}};
  single.trials = 300;
  single.seed = 3;
  auto mixed = single;
  mixed.noise = {{0.5, 0.1}, {0.5, 0.3}};
  CHECK(mixed.effective_sigma() > single.effective_sigma());
  auto s = saddle_sim(single);
  auto m = saddle_sim(mixed);
  REQUIRE(s.median());
  REQUIRE(m.median());
  CHECK(*m.median() < *s.median());
}

TEST_CASE("calibrated escape constant reproduces the empirical quantile") {
  SaddleConfig cfg;
  cfg.trials = 200;
  cfg.seed = 5;
  auto r = saddle_sim(cfg);
  auto q = r.quantile(0.9);
  REQUIRE(q);
  auto c0 = calibrate_escape_constant(cfg, 0.1, *q);
  REQUIRE(c0);
  auto t = escape_time(escape_inputs_for(cfg, 0.1, *c0));
  REQUIRE(t);
  CHECK(*t == doctest::Approx(*q).epsilon(1e-9));
}

TEST_CASE("quantile counts censored trials as infinite") {
  SaddleResult r;
  r.trials = 4;
  r.times = {1.0, 2.0, 3.0};
  r.censored = 1;
  CHECK(*r.quantile(0.5) == 2.0);
  CHECK(*r.quantile(0.75) == 3.0);
  CHECK_FALSE(r.quantile(0.9));
}

TEST_CASE("quadratic training respects the centralized bound with estimated constants") {
  QuadraticObjective obj(1.5, {{0.0, 1.0}, {2.0, -1.0}, {1.0, 3.0}, {-1.0, 0.5}});
  const auto start = obj.params({4.0, -3.0});
  const double eta = 0.5;
  const std::size_t steps = 200;
  // Exact optimum value at the mean of the centres.
  const double optimum = obj.evaluate_full(obj.params({0.5, 0.875})).loss.total;

  auto est = estimate_constants(obj, start,
                                {.probes = 6, .radius = 0.2, .batch_size = 1,
                                 .minibatches = 64, .seed = 2, .best_seen = optimum});
  OptimizerConfig opt{.base_eta = eta / std::sqrt(double(steps)), .iterations = steps,
                      .batch_size = 1};
  auto run = train_cl(obj, start, opt, 4, {.exact_grad_norm = true});
  double mean = 0.0;
  for (const auto& row : run.trace) mean += row.grad_norm_sq;
  mean /= static_cast<double>(steps);

  TheoryInputs in;
  in.initial_gap = est.initial_gap;
  in.smoothness = est.smoothness;
  in.grad_bound_sq = est.grad_bound_sq;
  in.variance = est.variance;
  in.eta = eta;
  in.iterations = static_cast<double>(steps);
  auto bound = bound_cl(in);
  CHECK(bound.feasible);
  CHECK(mean <= bound.total);
}

TEST_CASE("report table lists every term") {
  auto in = unit_inputs();
  auto text = format_reports({bound_cl(in), bound_fl(in), bound_hybrid(in)});
  for (const char* word : {"initial gap", "variance", "drift", "bias floor", "total", "feasible"})
    CHECK(text.find(word) != std::string::npos);
  CHECK_THROWS_AS(bound_mode_from_string("x"), ConfigError);
  in.delta = 1.0;
  CHECK_THROWS_AS(in.validate(), ConfigError);
}
