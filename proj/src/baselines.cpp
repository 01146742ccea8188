#include "r2n2/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "r2n2/errors.hpp"

namespace r2n2 {

void ButcherTableau::validate() const {
  const std::size_t s = stages();
  if (s == 0) throw ConfigError("ButcherTableau: no stages");
  if (a.size() != s || nodes.size() != s) throw ConfigError("ButcherTableau: inconsistent sizes");
  for (std::size_t i = 0; i < s; ++i) {
    if (a[i].size() != i) throw ConfigError("ButcherTableau: a must be strictly lower triangular");
  }
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-14) throw ConfigError("ButcherTableau: weights must sum to 1");
}

ButcherTableau rk_tableau(std::size_t stages) {
  switch (stages) {
    case 1:
      return {"euler", {{}}, {1.0}, {0.0}, 1};
    case 2:
      return {"heun", {{}, {1.0}}, {0.5, 0.5}, {0.0, 1.0}, 2};
    case 3:
      return {"kutta3", {{}, {0.5}, {-1.0, 2.0}}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
              {0.0, 0.5, 1.0}, 3};
    case 4:
      return {"rk4",
              {{}, {0.5}, {0.0, 0.5}, {0.0, 0.0, 1.0}},
              {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0},
              {0.0, 0.5, 0.5, 1.0},
              4};
    default:
      throw ConfigError("rk_tableau: built-in tableaus exist for 1..4 stages");
  }
}

Vector rk_step(const ButcherTableau& tableau, const VectorField& f, std::span<const double> x,
               double h) {
  if (!(h > 0.0)) throw ConfigError("rk_step: h must be > 0");
  const std::size_t s = tableau.stages();
  std::vector<Vector> k;
  k.reserve(s);
  for (std::size_t i = 0; i < s; ++i) {
    Vector arg(x.begin(), x.end());
    for (std::size_t l = 0; l < i; ++l) {
      if (tableau.a[i][l] != 0.0) linalg::axpy(h * tableau.a[i][l], k[l], arg);
    }
    k.push_back(f(arg));
  }
  Vector out(x.begin(), x.end());
  for (std::size_t i = 0; i < s; ++i) linalg::axpy(h * tableau.weights[i], k[i], out);
  return out;
}

KrylovBasis arnoldi(const LinearOperator& apply_a, std::span<const double> r0, std::size_t n) {
  const double beta = linalg::norm2(r0);
  if (beta == 0.0) throw ConfigError("arnoldi: initial residual is zero");
  if (n == 0) throw ConfigError("arnoldi: need at least one step");
  KrylovBasis kb;
  kb.h = Matrix(n + 1, n, 0.0);
  kb.v.push_back(linalg::scale(1.0 / beta, r0));
  for (std::size_t j = 0; j < n; ++j) {
    Vector w = apply_a(kb.v[j]);
    const double wnorm0 = linalg::norm2(w);
    for (std::size_t i = 0; i <= j; ++i) {
      const double hij = linalg::dot(kb.v[i], w);
      kb.h(i, j) = hij;
      linalg::axpy(-hij, kb.v[i], w);
    }
    const double wnorm = linalg::norm2(w);
    kb.h(j + 1, j) = wnorm;
    kb.steps = j + 1;
    if (wnorm <= kArnoldiBreakdown * wnorm0) {
      kb.h(j + 1, j) = 0.0;
      kb.breakdown = true;
      break;
    }
    kb.v.push_back(linalg::scale(1.0 / wnorm, w));
  }
  if (kb.steps < n) {
    Matrix trimmed(kb.steps + 1, kb.steps, 0.0);
    for (std::size_t i = 0; i <= kb.steps; ++i)
      for (std::size_t j = 0; j < kb.steps; ++j) trimmed(i, j) = kb.h(i, j);
    kb.h = std::move(trimmed);
  }
  return kb;
}

GmresResult gmres_cycle(const LinearOperator& apply_a, std::span<const double> b,
                        std::span<const double> x0, std::size_t n) {
  if (n == 0) throw ConfigError("gmres_cycle: n must be >= 1");
  if (b.size() != x0.size()) throw DimensionError("gmres_cycle: b and x0 differ in length");
  const bool zero_start = std::all_of(x0.begin(), x0.end(), [](double v) { return v == 0.0; });
  Vector r = zero_start ? Vector(b.begin(), b.end()) : linalg::subtract(b, apply_a(x0));

  GmresResult res;
  res.x.assign(x0.begin(), x0.end());
  const double beta = linalg::norm2(r);
  if (beta == 0.0) return res;

  KrylovBasis kb = arnoldi(apply_a, r, n);
  const std::size_t k = kb.steps;
  Matrix& h = kb.h;
  Vector g(k + 1, 0.0);
  g[0] = beta;
  std::vector<double> cs(k), sn(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      const double t = cs[i] * h(i, j) + sn[i] * h(i + 1, j);
      h(i + 1, j) = -sn[i] * h(i, j) + cs[i] * h(i + 1, j);
      h(i, j) = t;
    }
    const double denom = std::hypot(h(j, j), h(j + 1, j));
    if (denom == 0.0) {
      cs[j] = 1.0;
      sn[j] = 0.0;
    } else {
      cs[j] = h(j, j) / denom;
      sn[j] = h(j + 1, j) / denom;
    }
    h(j, j) = denom;
    h(j + 1, j) = 0.0;
    g[j + 1] = -sn[j] * g[j];
    g[j] = cs[j] * g[j];
  }

  Vector y(k, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    double s = g[i];
    for (std::size_t l = i + 1; l < k; ++l) s -= h(i, l) * y[l];
    y[i] = h(i, i) != 0.0 ? s / h(i, i) : 0.0;
  }
  for (std::size_t i = 0; i < k; ++i) linalg::axpy(y[i], kb.v[i], res.x);
  res.residual_norm = std::abs(g[k]);
  res.steps = k;
  res.breakdown = kb.breakdown;
  return res;
}

GmresTrace gmres_restarted(const LinearOperator& apply_a, std::span<const double> b,
                           std::span<const double> x0, std::size_t n, std::size_t outer_t) {
  if (outer_t == 0) throw ConfigError("gmres_restarted: outer_t must be >= 1");
  GmresTrace tr;
  tr.iterates.emplace_back(x0.begin(), x0.end());
  tr.residual_norms.push_back(linalg::norm2(linalg::subtract(b, apply_a(x0))));
  for (std::size_t t = 0; t < outer_t; ++t) {
    GmresResult c = gmres_cycle(apply_a, b, tr.iterates.back(), n);
    tr.residual_norms.push_back(linalg::norm2(linalg::subtract(b, apply_a(c.x))));
    tr.iterates.push_back(std::move(c.x));
  }
  return tr;
}

LinearOperator matrix_operator(const Matrix& a) {
  return [a](std::span<const double> x) { return linalg::mat_vec(a, x); };
}

Vector jacobian_vector_fd(const ProblemFunction& f, std::span<const double> x,
                          std::span<const double> fx, std::span<const double> z,
                          double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("jacobian_vector_fd: epsilon must be > 0");
  Vector probe(x.begin(), x.end());
  linalg::axpy(epsilon, z, probe);
  Vector out = f(probe);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - fx[i]) / epsilon;
  return out;
}

Vector nk_gmres_step(const ProblemFunction& f, std::span<const double> x, std::size_t n,
                     double epsilon) {
  const Vector fx = f(x);
  const LinearOperator jv = [&](std::span<const double> z) {
    return jacobian_vector_fd(f, x, fx, z, epsilon);
  };
  const Vector rhs = linalg::scale(-1.0, fx);
  const GmresResult step = gmres_cycle(jv, rhs, Vector(x.size(), 0.0), n);
  return linalg::add(x, step.x);
}

Vector nk_gmres_step_analytic(const ProblemFunction& f, std::span<const double> x,
                              std::size_t n) {
  const Vector fx = f(x);
  const GmresResult step =
      gmres_cycle(matrix_operator(f.jacobian(x)), linalg::scale(-1.0, fx), Vector(x.size(), 0.0), n);
  return linalg::add(x, step.x);
}

std::vector<Vector> nk_gmres(const ProblemFunction& f, std::span<const double> x0, std::size_t n,
                             std::size_t steps, double epsilon) {
  std::vector<Vector> xs;
  xs.emplace_back(x0.begin(), x0.end());
  for (std::size_t k = 0; k < steps; ++k) xs.push_back(nk_gmres_step(f, xs.back(), n, epsilon));
  return xs;
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double kA21 = 1.0 / 5.0;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0, kA53 = 64448.0 / 6561.0,
                 kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0, kA63 = 46732.0 / 5247.0,
                 kA64 = 49.0 / 176.0, kA65 = -5103.0 / 18656.0;
constexpr double kB1 = 35.0 / 384.0, kB3 = 500.0 / 1113.0, kB4 = 125.0 / 192.0,
                 kB5 = -2187.0 / 6784.0, kB6 = 11.0 / 84.0;
constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0, kE4 = 71.0 / 1920.0,
                 kE5 = -17253.0 / 339200.0, kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;

constexpr double kMinStep = 1e-14;

Vector combine(std::span<const double> x, double h, std::initializer_list<double> coeffs,
               std::initializer_list<const Vector*> ks) {
  Vector out(x.begin(), x.end());
  auto c = coeffs.begin();
  for (const Vector* k : ks) {
    if (*c != 0.0) linalg::axpy(h * *c, *k, out);
    ++c;
  }
  return out;
}

}  // namespace

Vector reference_integrate(const VectorField& f, std::span<const double> x0, double t0, double t1,
                           double tol, IntegrationStats* stats) {
  if (!(tol > 0.0)) throw ConfigError("reference_integrate: tol must be > 0");
  if (!(t1 >= t0)) throw ConfigError("reference_integrate: need t1 >= t0");
  Vector x(x0.begin(), x0.end());
  if (t1 == t0) return x;
  const std::size_t m = x.size();

  auto err_scale = [&](const Vector& a, const Vector& b, std::size_t i) {
    return tol + tol * std::max(std::abs(a[i]), std::abs(b[i]));
  };

  Vector k1 = f(x);
  double h;
  {
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double sc = tol + tol * std::abs(x[i]);
      d0 += (x[i] / sc) * (x[i] / sc);
      d1 += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / std::max<std::size_t>(m, 1));
    d1 = std::sqrt(d1 / std::max<std::size_t>(m, 1));
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, t1 - t0);
  }

  double t = t0;
  double err_old = 1e-4;
  bool last_rejected = false;
  IntegrationStats local;
  while (t < t1) {
    if (h < kMinStep) throw StiffnessError("reference_integrate: step size underflow");
    const bool last = t + h >= t1;
    if (last) h = t1 - t;

    const Vector k2 = f(combine(x, h, {kA21}, {&k1}));
    const Vector k3 = f(combine(x, h, {kA31, kA32}, {&k1, &k2}));
    const Vector k4 = f(combine(x, h, {kA41, kA42, kA43}, {&k1, &k2, &k3}));
    const Vector k5 = f(combine(x, h, {kA51, kA52, kA53, kA54}, {&k1, &k2, &k3, &k4}));
    const Vector k6 = f(combine(x, h, {kA61, kA62, kA63, kA64, kA65}, {&k1, &k2, &k3, &k4, &k5}));
    Vector xn = combine(x, h, {kB1, 0.0, kB3, kB4, kB5, kB6}, {&k1, &k2, &k3, &k4, &k5, &k6});
    const Vector k7 = f(xn);

    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double e =
          h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] + kE6 * k6[i] + kE7 * k7[i]);
      const double r = e / err_scale(x, xn, i);
      err += r * r;
    }
    err = std::sqrt(err / std::max<std::size_t>(m, 1));
    if (!std::isfinite(err)) {
      h *= 0.2;
      last_rejected = true;
      ++local.rejected;
      continue;
    }

    if (err <= 1.0) {
      t = last ? t1 : t + h;
      x = std::move(xn);
      k1 = k7;
      ++local.accepted;
      double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.17) * std::pow(err_old, 0.04);
      fac = std::clamp(fac, 0.2, 10.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      h *= fac;
      err_old = std::max(err, 1e-4);
      last_rejected = false;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      last_rejected = true;
      ++local.rejected;
    }
  }
  if (stats) *stats = local;
  return x;
}

}  // namespace r2n2
