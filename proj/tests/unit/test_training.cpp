#include <doctest.h>

#include "helpers.hpp"
#include "r2n2/baselines.hpp"
#include "r2n2/errors.hpp"
#include "r2n2/problems.hpp"
#include "r2n2/training.hpp"

using namespace r2n2;
using namespace r2n2::test;

namespace {

// A fake trace whose iterates are given directly.
RolloutTrace trace_of(std::vector<Vector> iterates) {
  RolloutTrace t;
  t.iterates = std::move(iterates);
  return t;
}

LinearProblem a1_problem() { return {problems::builtin_matrix(1), problems::builtin_b_tilde()}; }

Dataset small_linear(std::size_t per, std::uint64_t seed = 1) {
  return problems::gen_linear_dataset({problems::builtin_matrix(1)}, problems::builtin_b_tilde(), 1.0, per, seed);
}

double sq(const Vector& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST_CASE("loss spec") {
  LossSpec s;
  s.steps = 3;
  CHECK(s.iteration_weights() == std::vector<double>{4, 16, 64});
  s.weighting = LossSpec::Weighting::uniform;
  CHECK(s.iteration_weights() == std::vector<double>{1, 1, 1});
  s.kind = LossSpec::Kind::final_iterate;
  CHECK(s.iteration_weights() == std::vector<double>{0, 0, 1});
  s.kind = LossSpec::Kind::residual_sum;
  s.weights = {1, 2, 3};
  CHECK(s.iteration_weights() == std::vector<double>{1, 2, 3});
  s.weights = {1, -2, 3};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.weights = {1, 2};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.weights.clear();
  s.steps = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  for (auto k : {LossSpec::Kind::residual_sum, LossSpec::Kind::target_sum, LossSpec::Kind::integration_weighted,
                 LossSpec::Kind::final_iterate}) {
    CHECK(loss_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(loss_kind_from_string("mse"), ConfigError);
}

TEST_CASE("loss_residual") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);
  const Vector exact = linalg::solve(p.a, p.b);
  LossSpec s;
  s.steps = 2;
  const Vector x0(5, 0.0);
  CHECK(loss_residual({trace_of({x0, exact, exact})}, {f}, s) < 1e-20);

  Rng rng(2);
  const Vector x1 = random_vector(rng, 5), x2 = random_vector(rng, 5), x3 = random_vector(rng, 5);
  LossSpec one;
  one.weighting = LossSpec::Weighting::uniform;
  CHECK(loss_residual({trace_of({x0, x1})}, {f}, one) == doctest::Approx(sq(residual(p.a, p.b, x1))).epsilon(1e-14));

  LossSpec three;
  three.steps = 3;
  const double r1 = sq(residual(p.a, p.b, x1)), r2 = sq(residual(p.a, p.b, x2)), r3 = sq(residual(p.a, p.b, x3));
  CHECK(loss_residual({trace_of({x0, x1, x2, x3})}, {f}, three) ==
        doctest::Approx(4 * r1 + 16 * r2 + 64 * r3).epsilon(1e-14));

  // Two samples: 1/N normalization.
  const double two = loss_residual({trace_of({x0, x1}), trace_of({x0, x2})}, {f, f}, one);
  CHECK(two == doctest::Approx(0.5 * (r1 + r2)).epsilon(1e-14));
  CHECK_THROWS_AS(loss_residual({trace_of({x0, x1})}, {f, f}, one), DimensionError);
  CHECK_THROWS_AS(loss_residual({trace_of({x0})}, {f}, one), DimensionError);
}

TEST_CASE("loss_target and loss_integration") {
  Rng rng(3);
  const Vector x0{0, 0}, x1 = random_vector(rng, 2), x2 = random_vector(rng, 2);
  const Vector t1 = random_vector(rng, 2), t2 = random_vector(rng, 2);
  LossSpec s;
  s.steps = 2;
  s.weighting = LossSpec::Weighting::uniform;
  CHECK(loss_target({trace_of({x0, t1, t2})}, {{t1, t2}}, s) == 0.0);

  const double base = loss_target({trace_of({x0, x1, x2})}, {{t1, t2}}, s);
  Vector y1 = t1, y2 = t2;
  for (int i = 0; i < 2; ++i) {
    y1[i] += 2 * (x1[i] - t1[i]);
    y2[i] += 2 * (x2[i] - t2[i]);
  }
  CHECK(loss_target({trace_of({x0, y1, y2})}, {{t1, t2}}, s) == doctest::Approx(4 * base).epsilon(1e-12));

  const auto tr = trace_of({x0, x1, x2});
  const double h = 0.04, p = 3;
  CHECK(loss_integration({tr}, {{t1, t2}}, {h}, 0.0, 2) == doctest::Approx(base).epsilon(1e-14));
  const double weighted = loss_integration({tr}, {{t1, t2}}, {h}, p, 2);
  CHECK(loss_integration({tr}, {{t1, t2}}, {h / 2}, p, 2) == doctest::Approx(8 * weighted).epsilon(1e-12));

  LossSpec w = s;
  w.weights = {std::pow(h, -p), std::pow(h, -p)};
  CHECK(loss_target({tr}, {{t1, t2}}, w) == doctest::Approx(weighted).epsilon(1e-14));

  // Hand value: one vdP-sized sample, h = 0.1, p = 3.
  const auto hand = trace_of({Vector{0, 0}, Vector{-3.5, 1.0}});
  const double v = loss_integration({hand}, {{Vector{-3.49, 1.02}}}, {0.1}, 3.0, 1);
  CHECK(v == doctest::Approx((0.01 * 0.01 + 0.02 * 0.02) * 1000.0).epsilon(1e-10));

  CHECK_THROWS_AS(loss_integration({tr}, {{t1, t2}}, {0.0}, p, 2), ConfigError);
  CHECK_THROWS_AS(loss_target({tr}, {{t1}}, s), ConfigError);
}

TEST_CASE("loss_final_iterate") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);
  Rng rng(4);
  const Vector x0(5, 0.0), x1 = random_vector(rng, 5), x2 = random_vector(rng, 5);
  const auto tr = trace_of({x0, x1, x2});
  LossSpec last;
  last.steps = 2;
  last.weights = {0.0, 1.0};
  CHECK(loss_final_iterate({tr}, {f}, 2) == doctest::Approx(loss_residual({tr}, {f}, last)).epsilon(1e-15));
  CHECK(loss_final_iterate({tr}, {f}, 2) == doctest::Approx(sq(residual(p.a, p.b, x2))).epsilon(1e-14));
  const Vector exact = linalg::solve(p.a, p.b);
  CHECK(loss_final_iterate({trace_of({x0, x1, exact})}, {f}, 2) < 1e-20);
  LossSpec one;
  one.weighting = LossSpec::Weighting::uniform;
  CHECK(loss_final_iterate({tr}, {f}, 1) == loss_residual({tr}, {f}, one));
}

TEST_CASE("adam") {
  auto params = R2N2Parameters::uniform(3, 1, -1, 1);
  const auto before = params;
  AdamState st;
  ParameterGradient zero{R2N2Parameters::zeros(3)};
  adam_step(st, params, zero);
  CHECK(params == before);

  AdamState fresh;
  auto p2 = before;
  ParameterGradient g{R2N2Parameters::uniform(3, 2, -5, 5)};
  adam_step(fresh, p2, g);
  const auto a = before.flatten(), b = p2.flatten(), gf = g.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double step = b[i] - a[i];
    CHECK(std::abs(step) <= 1e-3 * (1 + 1e-12));
    CHECK(step == doctest::Approx(-1e-3 * gf[i] / (std::abs(gf[i]) + 1e-8)).epsilon(1e-12));
  }

  AdamState again;
  auto p3 = before;
  adam_step(again, p3, g);
  CHECK(p3 == p2);

  ParameterGradient bad{R2N2Parameters::zeros(3)};
  bad.shape.blocks[0].out[1] = NAN;
  CHECK_THROWS_AS(adam_step(again, p3, bad), NonFiniteError);
  CHECK_THROWS_AS(adam_step(again, p3, ParameterGradient{R2N2Parameters::zeros(2)}), DimensionError);
}

TEST_CASE("dataset gradient is the mean of per-sample gradients") {
  const Dataset ds = small_linear(20);
  R2N2Config cfg;
  cfg.n = 3;
  LossSpec spec;
  spec.steps = 2;
  const auto params = R2N2Parameters::uniform(3, 5, -0.1, 0.1);
  const auto all = dataset_loss_and_gradient(params, cfg, spec, ds, ds.train, 1);
  Vector mean(params.size(), 0.0);
  double loss = 0;
  for (auto i : ds.train) {
    const auto& p = std::get<LinearProblem>(ds.instances[i]);
    const auto lg = grad_rollout_loss(params, cfg, problems::linear_function(p), Vector(5, 0.0),
                                      sample_loss(spec, cfg, ds, i));
    loss += lg.loss;
    const auto flat = lg.gradient.flatten();
    for (std::size_t q = 0; q < flat.size(); ++q) mean[q] += flat[q] / ds.train.size();
  }
  CHECK(all.loss == doctest::Approx(loss / ds.train.size()).epsilon(1e-13));
  CHECK(relative_linf_gap(all.gradient.flatten(), mean) < 1e-13);
  CHECK(dataset_loss(params, cfg, spec, ds, ds.train, 1) == doctest::Approx(all.loss).epsilon(1e-14));

  const auto threaded = dataset_loss_and_gradient(params, cfg, spec, ds, ds.train, 3);
  CHECK(threaded.loss == doctest::Approx(all.loss).epsilon(1e-13));
  CHECK(relative_linf_gap(threaded.gradient.flatten(), all.gradient.flatten()) < 1e-12);
}

TEST_CASE("ivp instances supply h and targets") {
  Dataset ds = problems::gen_ivp_dataset(5, 2);
  attach_reference_targets(ds, 2);
  R2N2Config cfg;
  cfg.n = 3;
  const auto& p = std::get<IVPProblem>(ds.instances[3]);
  CHECK(config_for(cfg, ds.instances[3]).h == p.h);
  CHECK(config_for(cfg, LinearProblem{}).h == 1.0);
  REQUIRE(ds.targets[3].size() == 2);
  const auto f = problems::vdp_function(p.a).evaluate;
  // Tiny RK4 steps as an independent reference.
  Vector x = p.x0;
  const std::size_t sub = 2000;
  for (std::size_t s = 0; s < 2 * sub; ++s) x = rk_step(rk_tableau(4), f, x, p.h / sub);
  CHECK(max_abs(x, ds.targets[3][1]) < 1e-10);

  LossSpec spec;
  spec.kind = LossSpec::Kind::integration_weighted;
  spec.steps = 1;
  const auto loss = sample_loss(spec, config_for(cfg, ds.instances[3]), ds, 3);
  CHECK(loss.kind == IterateLoss::Kind::target);
  CHECK(loss.weights[0] == doctest::Approx(std::pow(p.h, -3.0)).epsilon(1e-14));
  spec.order = 4;
  CHECK(sample_loss(spec, cfg, ds, 3).weights[0] == doctest::Approx(std::pow(p.h, -4.0)).epsilon(1e-14));

  Dataset bare = problems::gen_ivp_dataset(5, 2);
  spec.kind = LossSpec::Kind::target_sum;
  CHECK_THROWS_AS(sample_loss(spec, cfg, bare, 0), ConfigError);
}

TEST_CASE("train") {
  const Dataset ds = small_linear(30);
  R2N2Config cfg;
  cfg.n = 2;
  LossSpec spec;
  TrainOptions opts;
  opts.seed = 3;

  opts.epochs = 0;
  const auto none = train(ds, cfg, spec, opts);
  CHECK(none.history.empty());
  CHECK(none.params == none.initial);
  CHECK(none.initial == R2N2Parameters::uniform(2, 3, -0.1, 0.1));

  opts.epochs = 600;
  opts.eval_every = 50;
  opts.learning_rate = 1e-2;
  const auto run = train(ds, cfg, spec, opts);
  CHECK_FALSE(run.diverged);
  REQUIRE(run.history.size() == 600);
  CHECK(std::isnan(run.history[0].test_loss));
  CHECK_FALSE(std::isnan(run.history[49].test_loss));
  CHECK_FALSE(std::isnan(run.history.back().test_loss));
  // 100-epoch moving average never rises.
  double prev = INFINITY;
  for (std::size_t s = 0; s + 100 <= run.history.size(); s += 100) {
    double avg = 0;
    for (std::size_t e = s; e < s + 100; ++e) avg += run.history[e].train_loss / 100;
    CHECK(avg <= prev);
    prev = avg;
  }
  CHECK(run.history.back().train_loss < 0.5 * run.history.front().train_loss);

  const auto repeat = train(ds, cfg, spec, opts);
  CHECK(repeat.params == run.params);
  for (std::size_t e = 0; e < 600; ++e) CHECK(repeat.history[e].train_loss == run.history[e].train_loss);

  opts.threads = 3;
  const auto threaded = train(ds, cfg, spec, opts);
  CHECK(relative_linf_gap(threaded.params.flatten(), run.params.flatten()) < 1e-8);
}

TEST_CASE("train flags divergence") {
  const Dataset ds = small_linear(10);
  R2N2Config cfg;
  cfg.n = 2;
  LossSpec spec;
  spec.steps = 3;
  TrainOptions opts;
  opts.epochs = 50;
  opts.initial = R2N2Parameters::zeros(2);
  opts.initial->blocks[0].out = {1e120, 1e120};
  const auto run = train(ds, cfg, spec, opts);
  CHECK(run.diverged);
  CHECK(run.history.size() < 50);
  CHECK_FALSE(run.divergence_reason.empty());

  Dataset empty = ds;
  empty.train.clear();
  CHECK_THROWS_AS(train(empty, cfg, spec, opts), ConfigError);
}
