#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "r2n2/linalg.hpp"

namespace r2n2 {

/// A map f: R^m -> R^m together with its analytic Jacobian.
struct ProblemFunction {
  std::function<Vector(std::span<const double>)> evaluate;
  std::function<Matrix(std::span<const double>)> jacobian;
  std::size_t dim = 0;

  Vector operator()(std::span<const double> x) const { return evaluate(x); }
};

/// A x = b, solved from x0 = 0.
struct LinearProblem {
  Matrix a;
  Vector b;
};

/// Discretized Chandrasekhar H-equation with parameter c on m midpoints.
struct ChandrasekharProblem {
  double c = 0.0;
  std::size_t m = 0;
  Matrix a_c;  ///< cached kernel matrix
};

/// One Chandrasekhar instance: the problem plus its sampled initial guess.
struct NonlinearInstance {
  ChandrasekharProblem problem;
  Vector x0;
};

/// van der Pol initial-value problem integrated with step h from t0.
struct IVPProblem {
  double a = 0.0;
  Vector x0;
  double h = 0.0;
  double t0 = 0.0;
};

using ProblemInstance = std::variant<LinearProblem, NonlinearInstance, IVPProblem>;

/// Sampled instances with a disjoint 70/30 train/test split.
struct Dataset {
  std::vector<ProblemInstance> instances;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  std::string generator_tag;
  /// Free-form generator parameters as a JSON text (kept opaque here).
  std::string params_json = "{}";
  /// Optional reference trajectory per instance: targets[i][k-1] ~ x(t0 + k h).
  std::vector<std::vector<Vector>> targets;
};

namespace problems {

inline constexpr double kTrainFraction = 0.70;

// --- linear systems -------------------------------------------------------

/// Printed matrix A1..A19 (A4-A7 are the diagonal shifts of A1).
Matrix builtin_matrix(int id);
/// "A7" -> 7; throws ConfigError on anything else.
int parse_matrix_id(const std::string& name);
Vector builtin_b_tilde();
/// Diagonal shift applied to A1 to build A4..A7.
Vector builtin_delta_lambda();
Vector default_lambda();

/// A = G^T G + diag(lambda), G_ij ~ Normal(0, sigma) (sigma = std. deviation).
Matrix gen_linear_matrix(double sigma, std::span<const double> lambda, std::uint64_t seed);
/// A = G G^T with G_ij ~ U(0, s), s ~ U(0, 5): the random symmetric family.
Matrix gen_random_symmetric(std::size_t m, std::uint64_t seed);

/// b_i = b_tilde + U(-w, w)^m.
std::vector<Vector> sample_rhs(std::span<const double> b_tilde, double noise_halfwidth,
                               std::size_t count, std::uint64_t seed);

ProblemFunction linear_function(const LinearProblem& p);

/// Solution of the zero-padded problem rotated by Q: (Q A Q^T, Q b).
LinearProblem embed_problem(const LinearProblem& p, const Matrix& q);

// --- Chandrasekhar H-equation -----------------------------------------------

Matrix chandrasekhar_matrix(double c, std::size_t m);
ChandrasekharProblem make_chandrasekhar(double c, std::size_t m);
/// f(x)_j = x_j - 1 / (1 - (A_c x)_j); DomainError at a pole.
Vector chandrasekhar_residual(const ChandrasekharProblem& p, std::span<const double> x);
/// J_ji = delta_ji - A_c[j,i] / (1 - (A_c x)_j)^2.
Matrix chandrasekhar_jacobian(const ChandrasekharProblem& p, std::span<const double> x);
ProblemFunction chandrasekhar_function(const ChandrasekharProblem& p);

// --- van der Pol ------------------------------------------------------------

Vector vdp_rhs(double a, std::span<const double> x);
Matrix vdp_jacobian(double a, std::span<const double> x);
ProblemFunction vdp_function(double a);

// --- instances and datasets ---------------------------------------------------

ProblemFunction function_of(const ProblemInstance& inst);
Vector initial_iterate(const ProblemInstance& inst);
/// Layer scaling the instance supplies: the timestep for IVPs, 1 otherwise.
double scaling_of(const ProblemInstance& inst);
std::size_t dimension_of(const ProblemInstance& inst);

/// Seeded shuffle, first floor(0.7 N) to train, the rest to test.
void split_dataset(Dataset& ds, std::uint64_t seed);

/// One instance per (matrix, rhs) pair; rhs sampled per matrix.
Dataset gen_linear_dataset(const std::vector<Matrix>& matrices, std::span<const double> b_tilde,
                           double noise_halfwidth, std::size_t rhs_per_matrix, std::uint64_t seed);

struct ChandrasekharSampling {
  std::vector<std::size_t> ms{10, 20};
  std::vector<double> cs{0.875, 0.905, 0.935};
  std::size_t samples_per = 50;
  double center = 1.0;
  double stddev = 0.2;
};

Dataset gen_chandrasekhar_dataset(const ChandrasekharSampling& sampling, std::uint64_t seed);

/// a ~ U(1.35,1.65), x1 ~ U(-4,-3), x2 ~ U(0,2), h on an equidistant grid over
/// [0.01, 0.1] (one grid point per sample).
Dataset gen_ivp_dataset(std::size_t count, std::uint64_t seed);

}  // namespace problems
}  // namespace r2n2
