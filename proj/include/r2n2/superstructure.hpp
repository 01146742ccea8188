#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "r2n2/linalg.hpp"
#include "r2n2/problems.hpp"

namespace r2n2 {

enum class LayerMode {
  direct,        ///< v_j = f(x_k + h sum_l theta_jl v_l)
  forward_diff,  ///< v_j = (f(x_k + eps sum_l theta_jl v_l) - f(x_k)) / eps
};

struct R2N2Config {
  std::size_t n = 1;  ///< function evaluations per outer iteration
  double h = 1.0;     ///< layer/output scaling; ignored in forward_diff mode
  LayerMode mode = LayerMode::direct;
  double epsilon = 1e-8;  ///< forward-difference step

  /// Throws ConfigError if n == 0 or epsilon <= 0 in forward_diff mode.
  void validate() const;
};

/// Coefficients of one outer iteration.
///
/// `layers[j-1]` holds theta_{j,0..j-1} for the inner layers j = 1..n-1, so
/// the block is strictly lower triangular by construction; `out` holds
/// theta_{n,0..n-1}.
struct ParameterBlock {
  std::vector<std::vector<double>> layers;
  std::vector<double> out;

  static ParameterBlock zeros(std::size_t n);
  std::size_t n() const noexcept { return out.size(); }
  std::size_t size() const noexcept { return out.size() * (out.size() + 1) / 2; }

  friend bool operator==(const ParameterBlock&, const ParameterBlock&) = default;
};

/// Trainable weights. One block is shared across outer iterations unless the
/// parameters are iteration-dependent, in which case blocks[k] drives
/// iteration k and iterations past the last block reuse it.
struct R2N2Parameters {
  std::size_t n = 0;
  std::vector<ParameterBlock> blocks;
  /// Iteration-dependent mode only: all iterations use the inner-layer
  /// coefficients of blocks[0] and only the output coefficients vary.
  bool share_layers = false;

  static R2N2Parameters zeros(std::size_t n, std::size_t iteration_blocks = 1);
  /// Entries ~ U(lo, hi) from the seeded generator, in flat order.
  static R2N2Parameters uniform(std::size_t n, std::uint64_t seed, double lo, double hi,
                                std::size_t iteration_blocks = 1);

  bool per_iteration() const noexcept { return blocks.size() > 1; }
  std::size_t block_index(std::size_t iteration) const noexcept {
    return iteration < blocks.size() ? iteration : blocks.size() - 1;
  }
  /// Inner-layer coefficients applied at outer iteration k (0-based).
  const std::vector<std::vector<double>>& layers_for(std::size_t iteration) const;
  /// Output coefficients applied at outer iteration k (0-based).
  const std::vector<double>& out_for(std::size_t iteration) const;

  /// Number of scalars; flat order is block by block, layers row by row, then out.
  std::size_t size() const noexcept;
  std::vector<double> flatten() const;
  /// Overwrites all coefficients from a flat vector of length size().
  void assign(std::span<const double> flat);

  /// Throws ConfigError on shape violations or non-finite entries.
  void validate() const;

  friend bool operator==(const R2N2Parameters&, const R2N2Parameters&) = default;
};

/// Everything one forward pass produced.
struct TraceEntry {
  std::vector<Vector> v;        ///< v_0..v_{n-1}
  std::vector<Vector> x_prime;  ///< arguments passed to f: x'_1..x'_{n-1}
};

struct RolloutTrace {
  std::vector<Vector> iterates;   ///< x_0..x_T (fewer on divergence)
  std::vector<TraceEntry> steps;  ///< one per completed outer iteration
  std::vector<double> residual_norms;  ///< ||f(x_k)|| per recorded k
  bool diverged = false;
};

struct LayerOutput {
  Vector x_prime;  ///< argument of f (direct) or direction x~' (forward_diff)
  Vector v;
};

/// Residual norm above which a rollout is stopped and flagged.
inline constexpr double kDivergenceThreshold = 1e12;

/// Direct inner layer j (1-based), coefficients theta_{j,0..j-1}.
LayerOutput layer_forward(std::span<const double> theta_j, const R2N2Config& cfg,
                          const ProblemFunction& f, std::span<const double> x_k,
                          std::span<const Vector> v_list);

/// Forward-difference inner layer; v0 = f(x_k) is reused, not recomputed.
LayerOutput layer_forward_fd(std::span<const double> theta_j, const R2N2Config& cfg,
                             const ProblemFunction& f, std::span<const double> x_k,
                             std::span<const double> v0, std::span<const Vector> v_list);

/// x_{k+1} = x_k + s sum_j theta_{n,j} v_j with s = h (direct) or 1 (forward_diff).
Vector output_layer(std::span<const double> theta_out, const R2N2Config& cfg,
                    std::span<const double> x_k, std::span<const Vector> v_list);

struct ForwardResult {
  Vector x_next;
  TraceEntry entry;
};

/// One outer iteration using the coefficients for `iteration`.
ForwardResult forward_pass(const R2N2Parameters& params, const R2N2Config& cfg,
                           const ProblemFunction& f, std::span<const double> x_k,
                           std::size_t iteration);

struct RolloutOptions {
  /// Evaluate f once more at x_T to record its residual norm.
  bool final_residual = true;
};

/// T chained forward passes. Stops early, with `diverged` set, when a
/// residual norm exceeds kDivergenceThreshold or becomes non-finite.
RolloutTrace rollout(const R2N2Parameters& params, const R2N2Config& cfg,
                     const ProblemFunction& f, std::span<const double> x0, std::size_t steps,
                     RolloutOptions options = {});

/// Direct-mode coefficients reproducing a forward-difference network.
///
/// The direct network must evaluate f at x_k + eps x~'_j, which holds with
///   theta_{j,0} = (eps/h) (t_{j,0} - sum_{l>=1} t_{j,l} / eps),
///   theta_{j,l} = t_{j,l} / h,
///   theta_{n,0} = (t_{n,0} - sum_{j>=1} t_{n,j} / eps) / h,
///   theta_{n,j} = t_{n,j} / (eps h),
/// where t are the forward-difference coefficients and h = cfg.h. The
/// result is meant for cfg with mode = direct.
R2N2Parameters fd_params_to_direct(const R2N2Parameters& params_fd, const R2N2Config& cfg);

}  // namespace r2n2
