#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "r2n2/autodiff.hpp"
#include "r2n2/problems.hpp"
#include "r2n2/superstructure.hpp"

namespace r2n2 {

struct LossSpec {
  enum class Kind { residual_sum, target_sum, integration_weighted, final_iterate };
  enum class Weighting { power4, uniform };

  Kind kind = Kind::residual_sum;
  std::size_t steps = 1;  ///< T
  Weighting weighting = Weighting::power4;
  /// Explicit w_1..w_T; overrides `weighting` when non-empty.
  std::vector<double> weights;
  /// Order p of the 1/h^p weight (integration kind). Negative means p = n.
  double order = -1.0;

  /// w_1..w_T; final_iterate gives (0, ..., 0, 1).
  std::vector<double> iteration_weights() const;
  /// Throws ConfigError if T = 0 or a weight is negative or non-finite.
  void validate() const;
};

std::string to_string(LossSpec::Kind kind);
LossSpec::Kind loss_kind_from_string(const std::string& name);

// Batch losses over finished rollouts, all normalized by 1/N. traces[i]
// must hold at least T + 1 iterates.

/// (1/N) sum_i sum_k w_k ||f_i(x_ik)||^2
double loss_residual(const std::vector<RolloutTrace>& traces,
                     const std::vector<ProblemFunction>& problems, const LossSpec& spec);
/// (1/N) sum_i sum_k w_k ||x_ik - target_ik||^2, targets[i][k-1] for k = 1..T.
double loss_target(const std::vector<RolloutTrace>& traces,
                   const std::vector<std::vector<Vector>>& targets, const LossSpec& spec);
/// (1/N) sum_i sum_k ||x_ik - target_ik||^2 / h_i^p over k = 1..steps.
double loss_integration(const std::vector<RolloutTrace>& traces,
                        const std::vector<std::vector<Vector>>& targets,
                        const std::vector<double>& h_list, double p, std::size_t steps);
/// (1/N) sum_i ||f_i(x_iT)||^2
double loss_final_iterate(const std::vector<RolloutTrace>& traces,
                          const std::vector<ProblemFunction>& problems, std::size_t steps);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update in place. Throws DimensionError on a shape
/// mismatch and NonFiniteError on a non-finite gradient.
void adam_step(AdamState& state, R2N2Parameters& params, const ParameterGradient& grad);

/// Configuration the network uses on one instance: IVPs supply h.
R2N2Config config_for(const R2N2Config& base, const ProblemInstance& inst);

/// Per-sample loss for instance i of the dataset (unnormalized).
IterateLoss sample_loss(const LossSpec& spec, const R2N2Config& cfg, const Dataset& ds,
                        std::size_t i);

/// Fills ds.targets with x(t0 + k h), k = 1..steps, from the reference
/// integrator for every IVP instance.
void attach_reference_targets(Dataset& ds, std::size_t steps, double tol = 1e-12);

struct TrainOptions {
  std::size_t epochs = 5000;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  double init_low = -0.1;
  double init_high = 0.1;
  std::size_t iteration_blocks = 1;
  bool share_layers = false;
  /// Test loss is evaluated every eval_every epochs and on the last one.
  std::size_t eval_every = 1;
  std::size_t threads = 1;
  /// Starting point; drawn from U(init_low, init_high) when absent.
  std::optional<R2N2Parameters> initial;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;  ///< NaN when not evaluated this epoch
};

struct TrainingRun {
  R2N2Parameters initial;
  R2N2Parameters params;
  std::vector<EpochRecord> history;
  std::size_t epochs_requested = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string divergence_reason;
};

/// Mean per-sample loss over the given indices (1/N normalization).
double dataset_loss(const R2N2Parameters& params, const R2N2Config& cfg, const LossSpec& spec,
                    const Dataset& ds, const std::vector<std::size_t>& indices,
                    std::size_t threads = 1);

/// Mean loss and gradient over the given indices. Samples are split into
/// contiguous chunks per thread and reduced in chunk order.
LossAndGradient dataset_loss_and_gradient(const R2N2Parameters& params, const R2N2Config& cfg,
                                          const LossSpec& spec, const Dataset& ds,
                                          const std::vector<std::size_t>& indices,
                                          std::size_t threads = 1);

/// Full-batch Adam on ds.train. The history holds one record per completed
/// epoch; a non-finite loss or a domain error stops the run and sets
/// `diverged`.
TrainingRun train(const Dataset& ds, const R2N2Config& cfg, const LossSpec& spec,
                  const TrainOptions& options);

}  // namespace r2n2
