#include <doctest.h>

#include <memory>

#include "helpers.hpp"
#include "r2n2/errors.hpp"
#include "r2n2/problems.hpp"
#include "r2n2/superstructure.hpp"

using namespace r2n2;
using namespace r2n2::test;

namespace {

struct Counted {
  ProblemFunction f;
  std::shared_ptr<std::size_t> calls = std::make_shared<std::size_t>(0);
};

Counted counted(const ProblemFunction& inner) {
  Counted c;
  c.f = inner;
  auto calls = c.calls;
  c.f.evaluate = [inner, calls](std::span<const double> x) {
    ++*calls;
    return inner.evaluate(x);
  };
  return c;
}

LinearProblem a1_problem() { return {problems::builtin_matrix(1), problems::builtin_b_tilde()}; }

// Distance of v from span(basis) via least squares on the explicit basis.
double projection_residual(const std::vector<Vector>& basis, const Vector& v) {
  Matrix k(v.size(), basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) k.set_column(j, basis[j]);
  const Vector y = linalg::least_squares(k, v);
  return naive_norm(residual(k, v, y)) / std::max(naive_norm(v), 1e-300);
}

ProblemFunction scalar_square() {
  ProblemFunction f;
  f.dim = 1;
  f.evaluate = [](std::span<const double> x) { return Vector{x[0] * x[0]}; };
  f.jacobian = [](std::span<const double> x) { return Matrix{{2 * x[0]}}; };
  return f;
}

}  // namespace

TEST_CASE("parameter shapes") {
  const auto p = R2N2Parameters::zeros(4);
  CHECK(p.size() == 10);
  REQUIRE(p.blocks.front().layers.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) CHECK(p.blocks.front().layers[j].size() == j + 1);
  CHECK(p.blocks.front().out.size() == 4);

  auto q = R2N2Parameters::uniform(3, 9, -0.1, 0.1, 2);
  CHECK(q.size() == 12);
  auto flat = q.flatten();
  for (double v : flat) {
    CHECK(v >= -0.1);
    CHECK(v < 0.1);
  }
  R2N2Parameters r = R2N2Parameters::zeros(3, 2);
  r.assign(flat);
  CHECK(r == q);
  CHECK(R2N2Parameters::uniform(3, 9, -0.1, 0.1, 2) == q);

  q.blocks[0].layers[1].push_back(0.0);
  CHECK_THROWS_AS(q.validate(), ConfigError);
  r.blocks[1].out[0] = NAN;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  CHECK_THROWS_AS(R2N2Parameters::zeros(3).assign(Vector(5)), DimensionError);

  R2N2Config cfg;
  cfg.n = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.n = 2;
  cfg.mode = LayerMode::forward_diff;
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("layer_forward") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);
  const Vector xk{0.1, -0.2, 0.3, 0.0, 1.0};
  const Vector v0 = f(xk);
  R2N2Config cfg;

  const auto zero = layer_forward(Vector{0.0}, cfg, f, xk, std::vector<Vector>{v0});
  CHECK(zero.x_prime == xk);
  CHECK(max_abs(zero.v, v0) < 1e-15);

  const auto one = layer_forward(Vector{1.0}, cfg, f, xk, std::vector<Vector>{v0});
  const Vector av0 = naive_mat_vec(p.a, v0);
  for (std::size_t i = 0; i < 5; ++i) CHECK(one.v[i] == doctest::Approx(v0[i] + av0[i]).epsilon(1e-13));

  cfg.h = 0.0;
  const auto annihilated = layer_forward(Vector{0.7, -2.0}, cfg, f, xk, std::vector<Vector>{v0, av0});
  CHECK(max_abs(annihilated.v, v0) < 1e-15);
}

TEST_CASE("layer_forward_fd") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);
  R2N2Config cfg;
  cfg.mode = LayerMode::forward_diff;
  const Vector xk{1, 2, 3, 4, 5};
  const Vector v0 = f(xk);

  CHECK(max_abs(layer_forward_fd(Vector{0.0}, cfg, f, xk, v0, std::vector<Vector>{v0}).v, Vector(5, 0.0)) == 0.0);

  Rng rng(2);
  const Vector v1 = random_vector(rng, 5);
  const auto out = layer_forward_fd(Vector{0.3, -0.6}, cfg, f, xk, v0, std::vector<Vector>{v0, v1});
  Vector dir(5);
  for (int i = 0; i < 5; ++i) dir[i] = 0.3 * v0[i] - 0.6 * v1[i];
  CHECK(max_abs(out.x_prime, dir) < 1e-15);
  const Vector adir = naive_mat_vec(p.a, dir);
  CHECK(max_abs(out.v, adir) < 1e-6 * naive_norm(adir));

  const auto sq = scalar_square();
  const auto q = layer_forward_fd(Vector{1.0}, cfg, sq, Vector{1.0}, Vector{1.0}, std::vector<Vector>{Vector{1.0}});
  CHECK(std::abs(q.v[0] - 2.0) < 1e-7);
}

TEST_CASE("output_layer") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);
  R2N2Config cfg;
  const Vector xk{0.5, 0.5, 0.5, 0.5, 0.5};
  const std::vector<Vector> vs{f(xk), Vector{1, 0, 0, 0, 0}};
  CHECK(output_layer(Vector{0, 0}, cfg, xk, vs) == xk);

  const Vector x1 = output_layer(Vector{-1.0}, cfg, Vector(5, 0.0), std::vector<Vector>{f(Vector(5, 0.0))});
  CHECK(max_abs(x1, p.b) < 1e-15);

  const Vector a = output_layer(Vector{0.3, -0.2}, cfg, xk, vs);
  const Vector b = output_layer(Vector{0.6, -0.4}, cfg, xk, vs);
  for (int i = 0; i < 5; ++i) CHECK((b[i] - xk[i]) == doctest::Approx(2 * (a[i] - xk[i])).epsilon(1e-14));
}

TEST_CASE("forward pass vectors lie in the Krylov subspace") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);
  R2N2Config cfg;
  cfg.n = 4;
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto params = R2N2Parameters::uniform(4, 100 + trial, -1.0, 1.0);
    const Vector xk = random_vector(rng, 5);
    const auto res = forward_pass(params, cfg, f, xk, 0);
    std::vector<Vector> krylov{f(xk)};
    for (std::size_t j = 1; j < 4; ++j) {
      krylov.push_back(naive_mat_vec(p.a, krylov.back()));
      std::vector<Vector> basis(krylov.begin(), krylov.begin() + j + 1);
      CHECK(projection_residual(basis, res.entry.v[j]) < 1e-10);
    }
    REQUIRE(res.entry.x_prime.size() == 3);
  }
}

TEST_CASE("forward pass with f = 0 is a fixed point") {
  ProblemFunction zero;
  zero.dim = 3;
  zero.evaluate = [](std::span<const double> x) { return Vector(x.size(), 0.0); };
  zero.jacobian = [](std::span<const double> x) { return Matrix(x.size(), x.size()); };
  R2N2Config cfg;
  cfg.n = 3;
  const Vector x{1, 2, 3};
  CHECK(forward_pass(R2N2Parameters::uniform(3, 1, -1, 1), cfg, zero, x, 0).x_next == x);
}

TEST_CASE("function evaluation budget") {
  const auto c = counted(problems::linear_function(a1_problem()));
  for (std::size_t n = 1; n <= 4; ++n) {
    R2N2Config cfg;
    cfg.n = n;
    const auto params = R2N2Parameters::uniform(n, n, -0.1, 0.1);
    *c.calls = 0;
    forward_pass(params, cfg, c.f, Vector(5, 0.0), 0);
    CHECK(*c.calls == n);
    cfg.mode = LayerMode::forward_diff;
    *c.calls = 0;
    forward_pass(params, cfg, c.f, Vector(5, 0.0), 0);
    CHECK(*c.calls == n);  // v0 is reused by every difference quotient
    cfg.mode = LayerMode::direct;
    for (std::size_t t = 1; t <= 3; ++t) {
      *c.calls = 0;
      rollout(params, cfg, c.f, Vector(5, 0.0), t, {.final_residual = false});
      CHECK(*c.calls == t * n);
      *c.calls = 0;
      rollout(params, cfg, c.f, Vector(5, 0.0), t);
      CHECK(*c.calls == t * n + 1);
    }
  }
}

TEST_CASE("rollout") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);
  R2N2Config cfg;
  cfg.n = 3;
  const auto params = R2N2Parameters::uniform(3, 4, -0.3, 0.3);
  const Vector x0(5, 0.0);

  const auto one = rollout(params, cfg, f, x0, 1);
  CHECK(one.iterates.size() == 2);
  CHECK(one.iterates[1] == forward_pass(params, cfg, f, x0, 0).x_next);
  CHECK(one.residual_norms.size() == 2);
  CHECK(one.residual_norms[0] == doctest::Approx(naive_norm(p.b)).epsilon(1e-15));

  const auto still = rollout(R2N2Parameters::zeros(3), cfg, f, x0, 4);
  for (const auto& x : still.iterates) CHECK(x == x0);
  for (double r : still.residual_norms) CHECK(r == still.residual_norms[0]);

  const auto many = rollout(params, cfg, f, x0, 5);
  CHECK(many.iterates.size() == 6);
  CHECK(many.steps.size() == 5);
  for (double r : many.residual_norms) CHECK(r >= 0.0);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(many.iterates[k + 1] == forward_pass(params, cfg, f, many.iterates[k], k).x_next);
  }
  CHECK_THROWS_AS(rollout(params, cfg, f, x0, 0), ConfigError);
}

TEST_CASE("rollout flags divergence") {
  const auto f = problems::linear_function(a1_problem());
  R2N2Config cfg;
  cfg.n = 1;
  auto params = R2N2Parameters::zeros(1);
  params.blocks[0].out[0] = 50.0;  // x_{k+1} = x_k + 50 r_k grows like 50 ||A||
  const auto tr = rollout(params, cfg, f, Vector(5, 0.0), 40);
  CHECK(tr.diverged);
  CHECK(tr.iterates.size() < 41);
  CHECK(tr.residual_norms.back() > kDivergenceThreshold);
}

TEST_CASE("iteration-dependent parameters reuse the last block") {
  const auto f = problems::linear_function(a1_problem());
  R2N2Config cfg;
  cfg.n = 2;
  auto params = R2N2Parameters::uniform(2, 8, -0.3, 0.3, 3);
  CHECK(&params.out_for(5) == &params.blocks[2].out);
  CHECK(&params.layers_for(7) == &params.blocks[2].layers);
  CHECK(&params.out_for(1) == &params.blocks[1].out);

  auto last = R2N2Parameters::zeros(2);
  last.blocks[0] = params.blocks[2];
  const Vector x{1, 1, 1, 1, 1};
  CHECK(forward_pass(params, cfg, f, x, 4).x_next == forward_pass(last, cfg, f, x, 0).x_next);

  params.share_layers = true;
  CHECK(&params.layers_for(2) == &params.blocks[0].layers);
  CHECK(&params.out_for(2) == &params.blocks[2].out);
}

TEST_CASE("same parameters run on any dimension") {
  const auto params = R2N2Parameters::uniform(3, 5, -0.2, 0.2);
  R2N2Config cfg;
  cfg.n = 3;
  const LinearProblem small{problems::builtin_matrix(2), problems::builtin_b_tilde()};
  const LinearProblem big = problems::embed_problem(small, linalg::haar_orthogonal(15, 2));
  const auto a = rollout(params, cfg, problems::linear_function(small), Vector(5, 0.0), 3);
  const auto b = rollout(params, cfg, problems::linear_function(big), Vector(15, 0.0), 3);
  CHECK(a.iterates.back().size() == 5);
  CHECK(b.iterates.back().size() == 15);
  for (std::size_t k = 0; k < 4; ++k) CHECK(a.residual_norms[k] == doctest::Approx(b.residual_norms[k]).epsilon(1e-10));
}

TEST_CASE("fd_params_to_direct") {
  const auto p = a1_problem();
  const auto f = problems::linear_function(p);

  SUBCASE("only the leading coefficient") {
    R2N2Config cfg;
    cfg.n = 2;
    cfg.h = 0.5;
    cfg.epsilon = 1e-3;
    auto fd = R2N2Parameters::zeros(2);
    fd.blocks[0].layers[0][0] = 0.8;
    const auto d = fd_params_to_direct(fd, cfg);
    CHECK(d.blocks[0].layers[0][0] == doctest::Approx(1e-3 / 0.5 * 0.8).epsilon(1e-15));
  }

  SUBCASE("layer outputs agree on affine problems") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
      R2N2Config fd_cfg;
      fd_cfg.n = 1 + trial % 4;
      fd_cfg.mode = LayerMode::forward_diff;
      fd_cfg.h = rng.uniform(0.1, 2.0);
      const auto fd = R2N2Parameters::uniform(fd_cfg.n, 500 + trial, -1.0, 1.0);
      R2N2Config d_cfg = fd_cfg;
      d_cfg.mode = LayerMode::direct;
      const auto d = fd_params_to_direct(fd, fd_cfg);
      const Vector xk = random_vector(rng, 5, -2, 2);
      const auto a = forward_pass(fd, fd_cfg, f, xk, 0);
      const auto b = forward_pass(d, d_cfg, f, xk, 0);
      // Direct-mode evaluations are v0 + eps * (difference quotient).
      for (std::size_t j = 1; j < fd_cfg.n; ++j) {
        Vector expect = a.entry.v[0];
        linalg::axpy(fd_cfg.epsilon, a.entry.v[j], expect);
        CHECK(max_abs(b.entry.v[j], expect) <= 1e-6 * naive_norm(expect));
      }
      const double scale = std::max(naive_norm(a.x_next), 1e-12);
      CHECK(max_abs(a.x_next, b.x_next) <= 1e-6 * scale);
    }
  }

  SUBCASE("exact for affine f at any epsilon") {
    const LinearProblem two{Matrix{{2, 1}, {1, 3}}, Vector{1, -1}};
    const auto g = problems::linear_function(two);
    for (double eps : {0.5, 1e-2, 1e-4}) {
      R2N2Config fd_cfg;
      fd_cfg.n = 3;
      fd_cfg.mode = LayerMode::forward_diff;
      fd_cfg.epsilon = eps;
      fd_cfg.h = 0.7;
      const auto fd = R2N2Parameters::uniform(3, 77, -1.0, 1.0);
      R2N2Config d_cfg = fd_cfg;
      d_cfg.mode = LayerMode::direct;
      const Vector a = forward_pass(fd, fd_cfg, g, Vector{0.3, 0.4}, 0).x_next;
      const Vector b = forward_pass(fd_params_to_direct(fd, fd_cfg), d_cfg, g, Vector{0.3, 0.4}, 0).x_next;
      CHECK(max_abs(a, b) < 1e-12 / eps);
    }
  }
}

TEST_CASE("forward pass propagates domain errors") {
  const auto f = problems::chandrasekhar_function(problems::make_chandrasekhar(0.9, 2));
  R2N2Config cfg;
  cfg.n = 1;
  CHECK_THROWS_AS(forward_pass(R2N2Parameters::zeros(1), cfg, f, Vector(2, 1.0 / 0.28125), 0), DomainError);
}
