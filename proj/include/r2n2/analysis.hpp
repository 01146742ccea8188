#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "r2n2/baselines.hpp"
#include "r2n2/linalg.hpp"
#include "r2n2/problems.hpp"
#include "r2n2/superstructure.hpp"

namespace r2n2 {

/// ||b|| - ||A x_hat - b||: progress made from x0 = 0.
double residual_reduction(const LinearProblem& p, std::span<const double> x_hat);

/// ||f(x0)|| - ||f(x_k)||
double residual_reduction_nk(const ProblemFunction& f, std::span<const double> x0,
                             std::span<const double> x_k);

/// delta_method / delta_baseline; throws ConfigError for a zero baseline.
double relative_performance(double delta_method, double delta_baseline);

/// zeta_1..zeta_n such that one direct-mode pass on f(x) = A x - b maps the
/// residual r_k to (I + sum_j zeta_j A^j) r_k, for any A. Computed by the
/// exact polynomial recursion p_0 = 1, p_j(z) = 1 + h sum_l theta_jl z p_l(z).
/// Throws ConfigError for forward-diff mode or iteration-dependent parameters.
std::vector<double> theta_to_zeta(const R2N2Parameters& params, const R2N2Config& cfg);

struct AlgorithmOperator {
  Matrix matrix;
  std::vector<double> zeta;
};

/// I + sum_j zeta_j A^j.
AlgorithmOperator algorithm_operator(const R2N2Parameters& params, const R2N2Config& cfg,
                                     const Matrix& a);

struct Certification {
  enum class Verdict { convergent, not_convergent, marginal };
  double norm = 0.0;
  bool convergent = false;
  Verdict verdict = Verdict::not_convergent;
};

/// Half-width of the band around 1 reported as marginal.
inline constexpr double kMarginalBand = 1e-9;

/// Spectral norm of the operator; convergent iff norm < 1 and not marginal.
Certification certify_convergence(const AlgorithmOperator& op);
std::string to_string(Certification::Verdict v);

struct TraceStats {
  std::vector<double> mean;
  std::vector<double> min;
  std::vector<double> max;
};

/// Per-iteration mean/min/max of residual norms. Throws DimensionError if the
/// traces differ in length.
TraceStats convergence_trace_stats(const std::vector<RolloutTrace>& traces);
TraceStats convergence_trace_stats(const std::vector<std::vector<double>>& residual_series);

struct OrderMeasurement {
  std::vector<double> h;
  std::vector<double> error;  ///< one-step error against the reference integrator
  double slope = 0.0;         ///< least-squares slope of log(error) vs log(h)
};

/// One-step errors of an explicit RK scheme for h0, h0/2, ..., h0/2^halvings.
OrderMeasurement measure_step_order(const ButcherTableau& tableau, const VectorField& f,
                                    std::span<const double> x0, double h0, std::size_t halvings,
                                    double reference_tol = 1e-13);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace r2n2
