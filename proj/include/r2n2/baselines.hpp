#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "r2n2/linalg.hpp"
#include "r2n2/problems.hpp"

namespace r2n2 {

/// Explicit Runge-Kutta scheme. a is strictly lower triangular: a[i] holds
/// the i coefficients of stage i on stages 0..i-1.
struct ButcherTableau {
  std::string name;
  std::vector<std::vector<double>> a;
  std::vector<double> weights;
  std::vector<double> nodes;
  int order = 0;

  std::size_t stages() const noexcept { return weights.size(); }
  /// Throws ConfigError unless explicit and consistent (weights sum to 1).
  void validate() const;
};

using VectorField = std::function<Vector(std::span<const double>)>;
using LinearOperator = std::function<Vector(std::span<const double>)>;

/// Butcher tableau of the classical method with n stages, n = 1..4:
/// Euler, Heun, Kutta's third-order method, and the classic RK4.
ButcherTableau rk_tableau(std::size_t stages);

Vector rk_step(const ButcherTableau& tableau, const VectorField& f, std::span<const double> x,
               double h);

/// Arnoldi factorization A V_k = V_{k+1} H.
struct KrylovBasis {
  std::vector<Vector> v;  ///< orthonormal columns; steps + 1 unless broken down
  Matrix h;               ///< (steps + 1) x steps upper Hessenberg
  std::size_t steps = 0;  ///< operator applications performed
  bool breakdown = false;
};

/// Threshold on the orthogonalized candidate, relative to ||A v_j||.
inline constexpr double kArnoldiBreakdown = 1e-14;

/// n steps of modified Gram-Schmidt Arnoldi from r0. Throws ConfigError if
/// r0 is zero.
KrylovBasis arnoldi(const LinearOperator& apply_a, std::span<const double> r0, std::size_t n);

struct GmresResult {
  Vector x;
  double residual_norm = 0.0;  ///< minimized value of ||b - A x||
  std::size_t steps = 0;
  bool breakdown = false;
};

/// One GMRES(n) cycle from x0; the Hessenberg least-squares problem is solved
/// with Givens rotations. When x0 is exactly zero the initial residual is b
/// and no operator application is spent on it.
GmresResult gmres_cycle(const LinearOperator& apply_a, std::span<const double> b,
                        std::span<const double> x0, std::size_t n);

struct GmresTrace {
  std::vector<Vector> iterates;        ///< x_0..x_T
  std::vector<double> residual_norms;  ///< ||b - A x_k||, k = 0..T
};

/// GMRES(n) restarted outer_t times, each cycle from the previous output.
GmresTrace gmres_restarted(const LinearOperator& apply_a, std::span<const double> b,
                           std::span<const double> x0, std::size_t n, std::size_t outer_t);

LinearOperator matrix_operator(const Matrix& a);

/// (f(x + eps z) - f(x)) / eps, reusing the cached fx = f(x).
Vector jacobian_vector_fd(const ProblemFunction& f, std::span<const double> x,
                          std::span<const double> fx, std::span<const double> z,
                          double epsilon = 1e-8);

/// One Newton step whose linear system J dx = -f(x) is solved by a single
/// GMRES(n) cycle from dx = 0 using finite-difference products. Full step.
/// Costs n + 1 evaluations of f.
Vector nk_gmres_step(const ProblemFunction& f, std::span<const double> x, std::size_t n,
                     double epsilon = 1e-8);

/// Same step with exact products J(x) z from the analytic Jacobian.
Vector nk_gmres_step_analytic(const ProblemFunction& f, std::span<const double> x,
                              std::size_t n);

/// x_0..x_steps of repeated nk_gmres_step.
std::vector<Vector> nk_gmres(const ProblemFunction& f, std::span<const double> x0, std::size_t n,
                             std::size_t steps, double epsilon = 1e-8);

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Dormand-Prince 5(4) with PI step-size control from t0 to t1, using
/// tol as both absolute and relative tolerance. Throws StiffnessError when
/// the step size drops below 1e-14.
Vector reference_integrate(const VectorField& f, std::span<const double> x0, double t0, double t1,
                           double tol, IntegrationStats* stats = nullptr);

}  // namespace r2n2
