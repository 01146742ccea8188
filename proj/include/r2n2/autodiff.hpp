#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "r2n2/problems.hpp"
#include "r2n2/superstructure.hpp"

namespace r2n2 {

/// Per-sample loss over the iterates x_1..x_T of one rollout:
///   residual: sum_k w_k ||f(x_k)||^2
///   target:   sum_k w_k ||x_k - target_k||^2
struct IterateLoss {
  enum class Kind { residual, target };
  Kind kind = Kind::residual;
  std::vector<double> weights;  ///< w_1..w_T; the length defines T
  std::vector<Vector> targets;  ///< target kind only, one per iterate

  std::size_t steps() const noexcept { return weights.size(); }
};

/// dLoss/dtheta, laid out exactly like the parameters it differentiates.
struct ParameterGradient {
  R2N2Parameters shape;  ///< coefficients hold the partial derivatives

  std::vector<double> flatten() const { return shape.flatten(); }
};

struct LossAndGradient {
  double loss = 0.0;
  ParameterGradient gradient;
};

/// Loss of one rollout without the divergence guard.
double rollout_loss(const R2N2Parameters& params, const R2N2Config& cfg, const ProblemFunction& f,
                    std::span<const double> x0, const IterateLoss& loss);

namespace detail {
struct GradientOptions {
  /// Forward-diff mode only: drop the dependence of v_j on x_k through the
  /// difference quotient. Wrong on purpose; exists so tests can show the
  /// term matters once T >= 2.
  bool drop_fd_iterate_term = false;
};
}  // namespace detail

/// Exact reverse accumulation through the whole rollout (backpropagation
/// through all outer iterations). Uses the analytic Jacobian of f at every
/// point f was evaluated. Throws NonFiniteError if the loss or any gradient
/// entry is not finite.
LossAndGradient grad_rollout_loss(const R2N2Parameters& params, const R2N2Config& cfg,
                                  const ProblemFunction& f, std::span<const double> x0,
                                  const IterateLoss& loss, detail::GradientOptions options = {});

/// Central differences per scalar coefficient.
ParameterGradient finite_diff_grad(const R2N2Parameters& params, const R2N2Config& cfg,
                                   const ProblemFunction& f, std::span<const double> x0,
                                   const IterateLoss& loss, double step = 1e-6);

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
double relative_linf_gap(std::span<const double> a, std::span<const double> b,
                         double floor = 1e-12);

}  // namespace r2n2
