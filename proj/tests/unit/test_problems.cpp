#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "r2n2/baselines.hpp"
#include "r2n2/errors.hpp"
#include "r2n2/problems.hpp"

using namespace r2n2;
using namespace r2n2::test;

namespace {

// Central differences of f, column by column.
Matrix fd_jacobian(const ProblemFunction& f, std::span<const double> x, double step = 1e-6) {
  const std::size_t m = x.size();
  Matrix j(m, m);
  for (std::size_t c = 0; c < m; ++c) {
    Vector xp(x.begin(), x.end()), xm(x.begin(), x.end());
    xp[c] += step;
    xm[c] -= step;
    const Vector fp = f(xp), fm = f(xm);
    for (std::size_t r = 0; r < m; ++r) j(r, c) = (fp[r] - fm[r]) / (2 * step);
  }
  return j;
}

double relative_gap(const Matrix& a, const Matrix& b) {
  double scale = 0;
  for (double v : b.data()) scale = std::max(scale, std::abs(v));
  return linalg::max_abs_diff(a, b) / std::max(scale, 1e-12);
}

}  // namespace

TEST_CASE("builtin matrices match the printed entries") {
  CHECK(problems::builtin_matrix(1)(0, 0) == 1.392232);
  CHECK(problems::builtin_matrix(1)(4, 4) == 0.735495);
  CHECK(problems::builtin_matrix(11)(0, 0) == 0.554750);
  CHECK(problems::builtin_matrix(19)(4, 4) == 2.083496);
  for (int id = 1; id <= 19; ++id) {
    const Matrix a = problems::builtin_matrix(id);
    CHECK(a.rows() == 5);
    CHECK(a.cols() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      // A10 and A15 each carry one printed entry that differs from its mirror
      // in the 7th digit; the values are kept verbatim.
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(a(i, j) - a(j, i)) < 2e-6);
    }
  }
  CHECK_THROWS_AS(problems::builtin_matrix(0), ConfigError);
  CHECK_THROWS_AS(problems::builtin_matrix(20), ConfigError);
  CHECK(problems::parse_matrix_id("A7") == 7);
  CHECK(problems::parse_matrix_id("A19") == 19);
  CHECK_THROWS_AS(problems::parse_matrix_id("B3"), ConfigError);
  CHECK_THROWS_AS(problems::parse_matrix_id("A20"), ConfigError);
  CHECK_THROWS_AS(problems::parse_matrix_id("A"), ConfigError);
}

TEST_CASE("shifted matrices differ from A1 only on the diagonal") {
  const Matrix a1 = problems::builtin_matrix(1);
  for (int id = 4; id <= 7; ++id) {
    const Matrix a = problems::builtin_matrix(id);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        if (i != j) CHECK(a(i, j) == a1(i, j));
      }
    }
  }
}

TEST_CASE("b tilde") {
  const Vector b = problems::builtin_b_tilde();
  REQUIRE(b.size() == 5);
  CHECK(b[0] == 2.483570);
  CHECK(b == Vector{2.483570, -0.691321, 3.238442, 7.615149, -1.170766});
  // 6.16812 + 0.47793 + 10.48751 + 57.99050 + 1.37069 = 76.49475
  CHECK(naive_norm(b) == doctest::Approx(8.746127).epsilon(1e-6));
}

TEST_CASE("gen_linear_matrix") {
  const Vector lambda{1, 0.75, 0.5, 0.1, 0.1};
  CHECK(problems::gen_linear_matrix(0.0, lambda, 3) == Matrix::diagonal(lambda));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix a = problems::gen_linear_matrix(0.1, lambda, seed);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(a(i, j) - a(j, i)) <= 1e-15);
    }
    CHECK(linalg::cholesky(a));
    // Smallest eigenvalue > 0: A - mu I stays positive definite for mu just below lambda_min(diag).
    CHECK(linalg::cholesky(linalg::add(a, linalg::scale(-0.099, Matrix::identity(5)))));
  }
  CHECK(problems::gen_linear_matrix(0.1, lambda, 9) == problems::gen_linear_matrix(0.1, lambda, 9));
  CHECK_FALSE(problems::gen_linear_matrix(0.1, lambda, 9) == problems::gen_linear_matrix(0.1, lambda, 10));

  const Matrix r = problems::gen_random_symmetric(5, 2);
  CHECK(linalg::max_abs_diff(r, linalg::transpose(r)) <= 1e-15);
}

TEST_CASE("sample_rhs") {
  const Vector bt = problems::builtin_b_tilde();
  for (const auto& b : problems::sample_rhs(bt, 0.0, 10, 1)) CHECK(b == bt);

  const auto samples = problems::sample_rhs(bt, 1.0, 500, 2);
  CHECK(samples.size() == 500);
  for (const auto& b : samples) {
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(b[i] >= bt[i] - 1.0);
      CHECK(b[i] <= bt[i] + 1.0);
    }
  }
  const Vector zero(5, 0.0);
  double lo = 0, hi = 0;
  for (const auto& b : problems::sample_rhs(zero, 5.0, 500, 3)) {
    for (double v : b) {
      CHECK(std::abs(v) <= 5.0);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  CHECK(lo < -4.5);
  CHECK(hi > 4.5);
  CHECK_THROWS_AS(problems::sample_rhs(bt, -1.0, 1, 0), ConfigError);
}

TEST_CASE("chandrasekhar matrix") {
  const Matrix a = problems::chandrasekhar_matrix(0.9, 2);
  CHECK(a(0, 0) == doctest::Approx(0.1125).epsilon(1e-15));
  CHECK(a(0, 1) == doctest::Approx(0.05625).epsilon(1e-15));
  CHECK(a(1, 0) == doctest::Approx(0.16875).epsilon(1e-15));
  CHECK(a(1, 1) == doctest::Approx(0.1125).epsilon(1e-15));
  CHECK(problems::chandrasekhar_matrix(0.0, 4) == Matrix(4, 4));

  const std::size_t m = 10;
  const Matrix b = problems::chandrasekhar_matrix(0.905, m);
  for (std::size_t j = 0; j < m; ++j) {
    const double mu_j = (static_cast<double>(j) + 0.5) / m;
    for (std::size_t i = 0; i < m; ++i) {
      const double mu_i = (static_cast<double>(i) + 0.5) / m;
      CHECK(b(j, i) == doctest::Approx(0.905 * mu_j / (2.0 * m * (mu_j + mu_i))).epsilon(1e-15));
      CHECK(b(j, i) / mu_j == doctest::Approx(b(i, j) / mu_i).epsilon(1e-15));
    }
  }
}

TEST_CASE("chandrasekhar residual") {
  const auto p0 = problems::make_chandrasekhar(0.0, 3);
  const Vector x{0.5, 2.0, -1.0};
  CHECK(max_abs(problems::chandrasekhar_residual(p0, x), Vector{-0.5, 1.0, -2.0}) < 1e-15);
  CHECK(problems::chandrasekhar_residual(p0, Vector(3, 1.0)) == Vector(3, 0.0));

  const auto p = problems::make_chandrasekhar(0.9, 2);
  const Vector f = problems::chandrasekhar_residual(p, Vector{1, 1});
  CHECK(f[0] == doctest::Approx(1.0 - 1.0 / (1.0 - 0.16875)).epsilon(1e-14));
  CHECK(f[0] == doctest::Approx(1.0 - 1.203007518797).epsilon(1e-10));
  CHECK(f[1] == doctest::Approx(1.0 - 1.0 / (1.0 - 0.28125)).epsilon(1e-14));

  // (A x)_2 = 1 at x = t * 1 with t = 1 / 0.28125.
  try {
    problems::chandrasekhar_residual(p, Vector(2, 1.0 / 0.28125));
    FAIL("expected a pole");
  } catch (const DomainError& e) {
    CHECK(e.component() == 1);
  }
}

TEST_CASE("analytic jacobians match central differences") {
  Rng rng(21);
  SUBCASE("chandrasekhar") {
    CHECK(problems::chandrasekhar_jacobian(problems::make_chandrasekhar(0.0, 4), Vector(4, 0.3)) ==
          Matrix::identity(4));
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t m = 2 + trial % 12;
      const auto f = problems::chandrasekhar_function(problems::make_chandrasekhar(rng.uniform(0.8, 0.95), m));
      Vector x(m);
      for (double& v : x) v = rng.normal(1.0, 0.2);
      CHECK(relative_gap(f.jacobian(x), fd_jacobian(f, x)) < 1e-5);
    }
  }
  SUBCASE("van der pol") {
    for (int trial = 0; trial < 100; ++trial) {
      const auto f = problems::vdp_function(rng.uniform(0.0, 2.0));
      const Vector x = random_vector(rng, 2, -4.0, 4.0);
      CHECK(relative_gap(f.jacobian(x), fd_jacobian(f, x)) < 1e-5);
    }
  }
  SUBCASE("linear") {
    const LinearProblem p{problems::builtin_matrix(3), problems::builtin_b_tilde()};
    const auto f = problems::linear_function(p);
    CHECK(f.jacobian(Vector(5, 0.0)) == p.a);
    CHECK(max_abs(f(Vector(5, 0.0)), linalg::scale(-1.0, p.b)) == 0.0);
  }
}

TEST_CASE("van der pol") {
  CHECK(problems::vdp_rhs(1.0, Vector{0, 0}) == Vector{0, 0});
  CHECK(problems::vdp_rhs(1.0, Vector{1, 1}) == Vector{1, -1});
  CHECK(problems::vdp_rhs(1.5, Vector{0, 2}) == Vector{2, 3});
  CHECK(problems::vdp_jacobian(1.0, Vector{0, 0}) == Matrix{{0, 1}, {-1, 1}});
  CHECK(problems::vdp_jacobian(0.0, Vector{0.3, -2}) == Matrix{{0, 1}, {-1, 0}});
  CHECK_THROWS_AS(problems::vdp_rhs(1.0, Vector{1, 2, 3}), DimensionError);
}

TEST_CASE("ivp dataset") {
  const Dataset ds = problems::gen_ivp_dataset(200, 13);
  REQUIRE(ds.instances.size() == 200);
  CHECK(ds.train.size() == 140);
  CHECK(ds.test.size() == 60);
  std::vector<double> hs;
  for (const auto& inst : ds.instances) {
    const auto& p = std::get<IVPProblem>(inst);
    CHECK(p.a >= 1.35);
    CHECK(p.a <= 1.65);
    CHECK(p.x0[0] >= -4.0);
    CHECK(p.x0[0] <= -3.0);
    CHECK(p.x0[1] >= 0.0);
    CHECK(p.x0[1] <= 2.0);
    CHECK(p.h >= 0.01 - 1e-15);
    CHECK(p.h <= 0.1 + 1e-15);
    hs.push_back(p.h);
  }
  std::sort(hs.begin(), hs.end());
  CHECK(hs.front() == doctest::Approx(0.01));
  CHECK(hs.back() == doctest::Approx(0.1));
  for (std::size_t i = 1; i < hs.size(); ++i) CHECK(hs[i] - hs[i - 1] == doctest::Approx(0.09 / 199).epsilon(1e-9));
  CHECK(problems::gen_ivp_dataset(7, 1).train.size() == 4);
  CHECK_THROWS_AS(problems::gen_ivp_dataset(0, 1), ConfigError);
}

TEST_CASE("dataset split is disjoint and exhaustive") {
  const Dataset ds = problems::gen_linear_dataset({problems::builtin_matrix(1), problems::builtin_matrix(2)},
                                                  problems::builtin_b_tilde(), 1.0, 37, 5);
  REQUIRE(ds.instances.size() == 74);
  std::set<std::size_t> all(ds.train.begin(), ds.train.end());
  for (auto i : ds.test) CHECK(all.insert(i).second);
  CHECK(all.size() == 74);
  CHECK(*all.rbegin() == 73);
  CHECK(ds.train.size() == 51);
  CHECK(ds.generator_tag == "mt19937_64/u53/box-muller");
}

TEST_CASE("chandrasekhar dataset") {
  const problems::ChandrasekharSampling s;
  const Dataset ds = problems::gen_chandrasekhar_dataset(s, 11);
  REQUIRE(ds.instances.size() == 300);
  std::set<std::pair<std::size_t, double>> combos;
  double sum = 0;
  std::size_t n = 0;
  for (const auto& inst : ds.instances) {
    const auto& ni = std::get<NonlinearInstance>(inst);
    combos.insert({ni.problem.m, ni.problem.c});
    CHECK(ni.x0.size() == ni.problem.m);
    for (double v : ni.x0) {
      sum += v;
      ++n;
    }
  }
  CHECK(combos.size() == 6);
  CHECK(std::abs(sum / n - 1.0) < 3 * 0.2 / std::sqrt(static_cast<double>(n)));

  problems::ChandrasekharSampling extra;
  extra.cs = {0.85, 0.95};
  const Dataset de = problems::gen_chandrasekhar_dataset(extra, 12);
  std::set<double> cs;
  for (const auto& inst : de.instances) cs.insert(std::get<NonlinearInstance>(inst).problem.c);
  CHECK(cs == std::set<double>{0.85, 0.95});
}

TEST_CASE("dataset generation is reproducible") {
  const auto a = problems::gen_chandrasekhar_dataset({}, 3);
  const auto b = problems::gen_chandrasekhar_dataset({}, 3);
  REQUIRE(a.instances.size() == b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    CHECK(std::get<NonlinearInstance>(a.instances[i]).x0 == std::get<NonlinearInstance>(b.instances[i]).x0);
  }
  CHECK(a.train == b.train);
  const auto c = problems::gen_ivp_dataset(50, 4), d = problems::gen_ivp_dataset(50, 4);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(std::get<IVPProblem>(c.instances[i]).x0 == std::get<IVPProblem>(d.instances[i]).x0);
  }
}

TEST_CASE("embed_problem") {
  const LinearProblem p{problems::builtin_matrix(1), problems::builtin_b_tilde()};
  const LinearProblem same = problems::embed_problem(p, Matrix::identity(5));
  CHECK(same.a == p.a);
  CHECK(same.b == p.b);

  const Matrix q = linalg::haar_orthogonal(15, 4);
  const LinearProblem e = problems::embed_problem(p, q);
  REQUIRE(e.a.rows() == 15);
  // The embedded system is singular on the padded directions; its solution of
  // minimal norm is Q (x, 0). Check that Q (x, 0) solves it.
  const Vector x = linalg::solve(p.a, p.b);
  Vector padded(15, 0.0);
  std::copy(x.begin(), x.end(), padded.begin());
  const Vector qx = naive_mat_vec(q, padded);
  CHECK(naive_norm(residual(e.a, e.b, qx)) < 1e-12);

  // Krylov vectors rotate with Q.
  Vector kb = p.b, ke = e.b;
  for (int j = 0; j < 4; ++j) {
    Vector padded_kb(15, 0.0);
    std::copy(kb.begin(), kb.end(), padded_kb.begin());
    CHECK(max_abs(naive_mat_vec(q, padded_kb), ke) < 1e-12 * std::max(1.0, naive_norm(ke)));
    kb = naive_mat_vec(p.a, kb);
    ke = naive_mat_vec(e.a, ke);
  }

  Matrix bad = q;
  bad(0, 0) += 1e-6;
  CHECK_THROWS_AS(problems::embed_problem(p, bad), DimensionError);
  CHECK_THROWS_AS(problems::embed_problem(p, linalg::haar_orthogonal(3, 1)), DimensionError);
}
