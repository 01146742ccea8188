#include "r2n2/problems.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "r2n2/errors.hpp"
#include "r2n2/rng.hpp"

namespace r2n2::problems {

namespace {

struct PrintedMatrix {
  int id;
  std::array<double, 25> entries;
};

// Entries copied verbatim, including the few printed with a seventh digit.
// A4-A7 are not printed; they are derived from A1 in builtin_matrix().
constexpr std::array<PrintedMatrix, 15> kPrinted{{
    {1, {1.392232, 0.152829, 0.088680, 0.185377, 0.156244,
          0.152829, 1.070883, 0.020994, 0.068940, 0.141251,
          0.088680, 0.020994, 0.910692, -0.222769, 0.060267,
          0.185377, 0.068940, -0.222769, 0.833275, 0.058072,
          0.156244, 0.141251, 0.060267, 0.058072, 0.735495}},
    {2, {1.122760, -0.040031, 0.113992, 0.068578, 0.089329,
          -0.040031, 0.920757, 0.085742, 0.089300, 0.158474,
          0.113992, 0.085742, 0.896851, 0.150485, 0.044783,
          0.068578, 0.089300, 0.150485, 0.729516, 0.070168,
          0.089329, 0.158474, 0.044783, 0.070168, 1.163038}},
    {3, {1.037577, 0.120230, -0.149775, 0.099841, 0.169390,
          0.120230, 1.095856, 0.180211, 0.120029, 0.133797,
          -0.149775, 0.180211, 0.781548, 0.241405, 0.320369,
          0.099841, 0.120029, 0.241405, 0.877185, 0.040910,
          0.169390, 0.133797, 0.320369, 0.040910, 0.602205}},
    {8, {9.801337, -4.563474, 2.196806, -5.154676, 5.063176,
          -4.563474, 48.751049, -26.335994, -3.910831, 17.380485,
          2.196806, -26.335994, 31.887071, 1.215492, -12.532923,
          -5.154676, -3.910831, 1.215492, 4.0743960, -5.876128,
          5.063176, 17.380485, -12.532923, -5.876128, 25.900849}},
    {9, {19.582102, -1.721533, 5.067191, 20.194875, 1.561468,
          -1.721533, 38.090555, -11.445662, -22.832142, -0.152421,
          5.067191, -11.445662, 17.191893, 14.784228, -3.889048,
          20.194875, -22.832142, 14.784228, 49.221081, 22.059518,
          1.561468, -0.152421, -3.889048, 22.059518, 31.461613}},
    {10, {1.543741, -1.708336, -0.855255, 1.180115, -0.606022,
          -1.708336, 7.993454, 1.813288, -0.855154, -0.375811,
          -0.855255, 1.813288, 2.131294, -2.223852, -0.808170,
          1.180115, -0.855154, -2.223852, 3.296235, 1.148258,
          -0.606022, -0.375811, -0.8081702, 1.148258, 2.018821}},
    {11, {0.554750, 0.192700, -0.030087, -0.173792, 0.078237,
          0.192700, 0.134709, 0.005420, 0.156018, -0.081507,
          -0.030087, 0.005420, 0.491319, -0.087115, -0.068497,
          -0.173792, 0.156018, -0.087115, 0.923782, -0.356224,
          0.078237, -0.081507, -0.068497, -0.356224, 0.197102}},
    {12, {1.803328, 0.200759, -0.355809, -0.098682, -0.037251,
          0.200759, 1.243347, 0.088843, 0.263899, 0.195536,
          -0.355809, 0.088843, 1.495596, 0.093483, 0.383077,
          -0.098682, 0.263899, 0.093483, 1.295673, 0.091526,
          -0.037251, 0.195536, 0.383077, 0.091526, 1.171966}},
    {13, {1.373797, 0.029822, 0.291240, -0.06804, -0.122712,
          0.029822, 1.352286, 0.213403, 0.259224, 0.113595,
          0.291240, 0.213403, 1.145153, 0.260138, -0.256945,
          -0.068040, 0.259224, 0.260138, 1.044292, 0.023357,
          -0.122712, 0.113595, -0.256945, 0.023357, 1.493027}},
    {14, {1.875641, 0.369074, -0.254450, 0.011282, 0.086120,
          0.369074, 1.438546, 0.165303, 0.330450, 0.326974,
          -0.254450, 0.165303, 1.578616, 0.135095, 0.435910,
          0.011282, 0.330450, 0.135095, 1.407443, 0.175663,
          0.086120, 0.326974, 0.435910, 0.175663, 1.302648}},
    {15, {1.496302, 0.069012, 0.466847, -0.023807, -0.07450,
          0.069012, 1.356091, 0.304412, 0.368689, 0.278316,
          0.466847, 0.304412, 1.273936, 0.359224, -0.193665,
          -0.023807, 0.368689, 0.359224, 1.096486, 0.099104,
          -0.0745018, 0.278316, -0.193665, 0.099104, 1.661732}},
    {16, {1.947954, 0.537389, -0.153091, 0.121248, 0.209492,
          0.537389, 1.633745, 0.241763, 0.397001, 0.458412,
          -0.153091, 0.241763, 1.661637, 0.176707, 0.488742,
          0.121248, 0.397001, 0.176707, 1.519214, 0.259799,
          0.209492, 0.458412, 0.488742, 0.259799, 1.433331}},
    {17, {1.618807, 0.108202, 0.642453, 0.020426, -0.026291,
          0.108202, 1.359896, 0.395421, 0.478153, 0.443036,
          0.642453, 0.395421, 1.402719, 0.458310, -0.130384,
          0.020426, 0.478153, 0.458310, 1.148681, 0.174850,
          -0.026291, 0.443036, -0.130384, 0.174850, 1.830438}},
    {18, {2.056424, 0.789862, -0.001053, 0.286197, 0.394551,
          0.789862, 1.926544, 0.356453, 0.496827, 0.655569,
          -0.001053, 0.356453, 1.786167, 0.239125, 0.567990,
          0.286197, 0.496827, 0.239125, 1.686871, 0.386004,
          0.394551, 0.655569, 0.567990, 0.386004, 1.629354}},
    {19, {1.802565, 0.166987, 0.905863, 0.086776, 0.046025,
          0.166987, 1.365604, 0.531934, 0.642350, 0.690117,
          0.905863, 0.531934, 1.595893, 0.606940, -0.035464,
          0.086776, 0.642350, 0.606940, 1.226972, 0.288470,
          0.046025, 0.690117, -0.035464, 0.288470, 2.083496}},
}};

}  // namespace

Matrix builtin_matrix(int id) {
  if (id >= 4 && id <= 7) {
    static constexpr std::array<double, 4> kShift{-1.0, 0.5, 1.3, 2.5};
    Matrix a = builtin_matrix(1);
    const Vector dl = builtin_delta_lambda();
    for (std::size_t i = 0; i < dl.size(); ++i) a(i, i) += kShift[id - 4] * dl[i];
    return a;
  }
  for (const auto& pm : kPrinted) {
    if (pm.id == id) return Matrix(5, 5, std::vector<double>(pm.entries.begin(), pm.entries.end()));
  }
  throw ConfigError("unknown builtin matrix id A" + std::to_string(id));
}

int parse_matrix_id(const std::string& name) {
  std::string digits = name;
  if (!digits.empty() && (digits[0] == 'A' || digits[0] == 'a')) digits.erase(0, 1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
    throw ConfigError("invalid matrix name '" + name + "' (expected A1..A19)");
  }
  const int id = std::stoi(digits);
  if (id < 1 || id > 19) throw ConfigError("unknown builtin matrix '" + name + "'");
  return id;
}

Vector builtin_b_tilde() { return {2.483570, -0.691321, 3.238442, 7.615149, -1.170766}; }

Vector builtin_delta_lambda() { return {0.5, 0.4, 0.3, 0.2, 0.1}; }

Vector default_lambda() { return {1.0, 0.75, 0.5, 0.1, 0.1}; }

Matrix gen_linear_matrix(double sigma, std::span<const double> lambda, std::uint64_t seed) {
  const std::size_t m = lambda.size();
  Rng rng(seed);
  Matrix g(m, m);
  for (double& v : g.data()) v = rng.normal(0.0, sigma);
  Matrix a = linalg::matmul(linalg::transpose(g), g);
  for (std::size_t i = 0; i < m; ++i) a(i, i) += lambda[i];
  return a;
}

Matrix gen_random_symmetric(std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  const double spread = rng.uniform(0.0, 5.0);
  Matrix g(m, m);
  for (double& v : g.data()) v = rng.uniform(0.0, spread);
  return linalg::matmul(g, linalg::transpose(g));
}

std::vector<Vector> sample_rhs(std::span<const double> b_tilde, double noise_halfwidth,
                               std::size_t count, std::uint64_t seed) {
  if (noise_halfwidth < 0.0) throw ConfigError("sample_rhs: noise half-width must be >= 0");
  Rng rng(seed);
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector b(b_tilde.begin(), b_tilde.end());
    for (double& v : b) v += rng.uniform(-noise_halfwidth, noise_halfwidth);
    out.push_back(std::move(b));
  }
  return out;
}

ProblemFunction linear_function(const LinearProblem& p) {
  if (!p.a.square() || p.a.rows() != p.b.size()) {
    throw DimensionError("linear_function: A must be square and match b");
  }
  return {
      [a = p.a, b = p.b](std::span<const double> x) {
        Vector r = linalg::mat_vec(a, x);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
        return r;
      },
      [a = p.a](std::span<const double>) { return a; },
      p.b.size(),
  };
}

LinearProblem embed_problem(const LinearProblem& p, const Matrix& q) {
  const std::size_t m = p.b.size();
  const std::size_t big = q.rows();
  if (!q.square() || big < m) throw DimensionError("embed_problem: Q must be square with rows >= m");
  if (linalg::orthogonality_defect(q) > 1e-10) {
    throw DimensionError("embed_problem: Q is not orthogonal");
  }
  Matrix padded(big, big);
  Vector b(big, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    b[i] = p.b[i];
    for (std::size_t j = 0; j < m; ++j) padded(i, j) = p.a(i, j);
  }
  return {linalg::matmul(linalg::matmul(q, padded), linalg::transpose(q)), linalg::mat_vec(q, b)};
}

Matrix chandrasekhar_matrix(double c, std::size_t m) {
  if (m == 0) throw DimensionError("chandrasekhar_matrix: m must be >= 1");
  const double md = static_cast<double>(m);
  Vector mu(m);
  for (std::size_t i = 0; i < m; ++i) mu[i] = (static_cast<double>(i) + 0.5) / md;
  Matrix a(m, m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < m; ++i) a(j, i) = c * mu[j] / (2.0 * md * (mu[j] + mu[i]));
  return a;
}

ChandrasekharProblem make_chandrasekhar(double c, std::size_t m) {
  return {c, m, chandrasekhar_matrix(c, m)};
}

namespace {

Vector chandrasekhar_denominators(const ChandrasekharProblem& p, std::span<const double> x) {
  Vector d = linalg::mat_vec(p.a_c, x);
  for (std::size_t j = 0; j < d.size(); ++j) {
    d[j] = 1.0 - d[j];
    if (d[j] == 0.0 || !std::isfinite(d[j])) {
      throw DomainError("chandrasekhar: pole at component " + std::to_string(j), j);
    }
  }
  return d;
}

}  // namespace

Vector chandrasekhar_residual(const ChandrasekharProblem& p, std::span<const double> x) {
  const Vector d = chandrasekhar_denominators(p, x);
  Vector f(x.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = x[j] - 1.0 / d[j];
  return f;
}

Matrix chandrasekhar_jacobian(const ChandrasekharProblem& p, std::span<const double> x) {
  const Vector d = chandrasekhar_denominators(p, x);
  Matrix j(p.m, p.m);
  for (std::size_t r = 0; r < p.m; ++r) {
    const double s = 1.0 / (d[r] * d[r]);
    for (std::size_t c = 0; c < p.m; ++c) j(r, c) = -p.a_c(r, c) * s;
    j(r, r) += 1.0;
  }
  return j;
}

ProblemFunction chandrasekhar_function(const ChandrasekharProblem& p) {
  return {
      [p](std::span<const double> x) { return chandrasekhar_residual(p, x); },
      [p](std::span<const double> x) { return chandrasekhar_jacobian(p, x); },
      p.m,
  };
}

Vector vdp_rhs(double a, std::span<const double> x) {
  if (x.size() != 2) throw DimensionError("vdp_rhs: state must be 2-dimensional");
  return {x[1], a * (1.0 - x[0] * x[0]) * x[1] - x[0]};
}

Matrix vdp_jacobian(double a, std::span<const double> x) {
  if (x.size() != 2) throw DimensionError("vdp_jacobian: state must be 2-dimensional");
  return {{0.0, 1.0}, {-2.0 * a * x[0] * x[1] - 1.0, a * (1.0 - x[0] * x[0])}};
}

ProblemFunction vdp_function(double a) {
  return {
      [a](std::span<const double> x) { return vdp_rhs(a, x); },
      [a](std::span<const double> x) { return vdp_jacobian(a, x); },
      2,
  };
}

ProblemFunction function_of(const ProblemInstance& inst) {
  return std::visit(
      [](const auto& p) -> ProblemFunction {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearProblem>) {
          return linear_function(p);
        } else if constexpr (std::is_same_v<T, NonlinearInstance>) {
          return chandrasekhar_function(p.problem);
        } else {
          return vdp_function(p.a);
        }
      },
      inst);
}

Vector initial_iterate(const ProblemInstance& inst) {
  return std::visit(
      [](const auto& p) -> Vector {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearProblem>) {
          return Vector(p.b.size(), 0.0);
        } else {
          return p.x0;
        }
      },
      inst);
}

double scaling_of(const ProblemInstance& inst) {
  if (const auto* ivp = std::get_if<IVPProblem>(&inst)) return ivp->h;
  return 1.0;
}

std::size_t dimension_of(const ProblemInstance& inst) { return initial_iterate(inst).size(); }

void split_dataset(Dataset& ds, std::uint64_t seed) {
  const std::size_t n = ds.instances.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(kTrainFraction * static_cast<double>(n)));
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
}

Dataset gen_linear_dataset(const std::vector<Matrix>& matrices, std::span<const double> b_tilde,
                           double noise_halfwidth, std::size_t rhs_per_matrix, std::uint64_t seed) {
  Dataset ds;
  ds.seed = seed;
  ds.generator_tag = std::string(Rng::kTag);
  for (std::size_t j = 0; j < matrices.size(); ++j) {
    if (matrices[j].rows() != b_tilde.size()) {
      throw DimensionError("gen_linear_dataset: matrix/rhs dimension mismatch");
    }
    for (auto& b : sample_rhs(b_tilde, noise_halfwidth, rhs_per_matrix, derive_seed(seed, j))) {
      ds.instances.emplace_back(LinearProblem{matrices[j], std::move(b)});
    }
  }
  split_dataset(ds, derive_seed(seed, 0x5b1));
  return ds;
}

Dataset gen_chandrasekhar_dataset(const ChandrasekharSampling& sampling, std::uint64_t seed) {
  Dataset ds;
  ds.seed = seed;
  ds.generator_tag = std::string(Rng::kTag);
  Rng rng(seed);
  for (std::size_t m : sampling.ms) {
    for (double c : sampling.cs) {
      const ChandrasekharProblem p = make_chandrasekhar(c, m);
      for (std::size_t s = 0; s < sampling.samples_per; ++s) {
        Vector x0(m);
        for (double& v : x0) v = rng.normal(sampling.center, sampling.stddev);
        ds.instances.emplace_back(NonlinearInstance{p, std::move(x0)});
      }
    }
  }
  split_dataset(ds, derive_seed(seed, 0x5b1));
  return ds;
}

Dataset gen_ivp_dataset(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("gen_ivp_dataset: count must be >= 1");
  Dataset ds;
  ds.seed = seed;
  ds.generator_tag = std::string(Rng::kTag);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    IVPProblem p;
    p.a = rng.uniform(1.35, 1.65);
    p.x0 = {rng.uniform(-4.0, -3.0), rng.uniform(0.0, 2.0)};
    p.h = 0.01 + 0.09 * frac;
    p.t0 = 0.0;
    ds.instances.emplace_back(std::move(p));
  }
  split_dataset(ds, derive_seed(seed, 0x5b1));
  return ds;
}

}  // namespace r2n2::problems
