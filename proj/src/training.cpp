#include "r2n2/training.hpp"

#include <cmath>
#include <limits>
#include <variant>

#include "r2n2/baselines.hpp"
#include "r2n2/errors.hpp"
#include "r2n2/parallel.hpp"

namespace r2n2 {

std::vector<double> LossSpec::iteration_weights() const {
  if (kind == Kind::final_iterate) {
    std::vector<double> w(steps, 0.0);
    if (steps > 0) w.back() = 1.0;
    return w;
  }
  if (!weights.empty()) return weights;
  std::vector<double> w(steps, 1.0);
  if (weighting == Weighting::power4) {
    for (std::size_t k = 0; k < steps; ++k) w[k] = std::pow(4.0, static_cast<double>(k + 1));
  }
  return w;
}

void LossSpec::validate() const {
  if (steps == 0) throw ConfigError("LossSpec: T must be >= 1");
  if (!weights.empty() && weights.size() != steps) {
    throw ConfigError("LossSpec: need exactly T weights");
  }
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("LossSpec: weights must be finite and >= 0");
  }
}

std::string to_string(LossSpec::Kind kind) {
  switch (kind) {
    case LossSpec::Kind::residual_sum: return "residual";
    case LossSpec::Kind::target_sum: return "target";
    case LossSpec::Kind::integration_weighted: return "integration";
    case LossSpec::Kind::final_iterate: return "final_iterate";
  }
  return "residual";
}

LossSpec::Kind loss_kind_from_string(const std::string& name) {
  if (name == "residual") return LossSpec::Kind::residual_sum;
  if (name == "target") return LossSpec::Kind::target_sum;
  if (name == "integration") return LossSpec::Kind::integration_weighted;
  if (name == "final_iterate") return LossSpec::Kind::final_iterate;
  throw ConfigError("unknown loss kind '" + name + "'");
}

namespace {

const Vector& iterate_at(const RolloutTrace& tr, std::size_t k) {
  if (k >= tr.iterates.size()) throw DimensionError("loss: trace shorter than T");
  return tr.iterates[k];
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("loss: target dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

double loss_residual(const std::vector<RolloutTrace>& traces,
                     const std::vector<ProblemFunction>& problems, const LossSpec& spec) {
  spec.validate();
  if (traces.size() != problems.size()) throw DimensionError("loss_residual: length mismatch");
  if (traces.empty()) return 0.0;
  const auto w = spec.iteration_weights();
  double total = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (std::size_t k = 1; k <= spec.steps; ++k) {
      if (w[k - 1] == 0.0) continue;
      const Vector r = problems[i](iterate_at(traces[i], k));
      total += w[k - 1] * linalg::dot(r, r);
    }
  }
  return total / static_cast<double>(traces.size());
}

double loss_target(const std::vector<RolloutTrace>& traces,
                   const std::vector<std::vector<Vector>>& targets, const LossSpec& spec) {
  spec.validate();
  if (traces.size() != targets.size()) throw DimensionError("loss_target: length mismatch");
  if (traces.empty()) return 0.0;
  const auto w = spec.iteration_weights();
  double total = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (targets[i].size() < spec.steps) throw ConfigError("loss_target: missing targets");
    for (std::size_t k = 1; k <= spec.steps; ++k) {
      total += w[k - 1] * squared_distance(iterate_at(traces[i], k), targets[i][k - 1]);
    }
  }
  return total / static_cast<double>(traces.size());
}

double loss_integration(const std::vector<RolloutTrace>& traces,
                        const std::vector<std::vector<Vector>>& targets,
                        const std::vector<double>& h_list, double p, std::size_t steps) {
  if (traces.size() != targets.size() || traces.size() != h_list.size()) {
    throw DimensionError("loss_integration: length mismatch");
  }
  if (traces.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!(h_list[i] > 0.0)) throw ConfigError("loss_integration: h must be > 0");
    if (targets[i].size() < steps) throw ConfigError("loss_integration: missing targets");
    const double scale = std::pow(h_list[i], -p);
    for (std::size_t k = 1; k <= steps; ++k) {
      total += scale * squared_distance(iterate_at(traces[i], k), targets[i][k - 1]);
    }
  }
  return total / static_cast<double>(traces.size());
}

double loss_final_iterate(const std::vector<RolloutTrace>& traces,
                          const std::vector<ProblemFunction>& problems, std::size_t steps) {
  LossSpec spec;
  spec.kind = LossSpec::Kind::final_iterate;
  spec.steps = steps;
  return loss_residual(traces, problems, spec);
}

void adam_step(AdamState& state, R2N2Parameters& params, const ParameterGradient& grad) {
  std::vector<double> theta = params.flatten();
  const std::vector<double> g = grad.flatten();
  if (g.size() != theta.size()) throw DimensionError("adam_step: gradient shape mismatch");
  for (double gi : g) {
    if (!std::isfinite(gi)) throw NonFiniteError("adam_step: non-finite gradient");
  }
  if (state.m.empty()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  if (state.m.size() != theta.size()) throw DimensionError("adam_step: state shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  }
  params.assign(theta);
}

R2N2Config config_for(const R2N2Config& base, const ProblemInstance& inst) {
  R2N2Config cfg = base;
  if (const auto* ivp = std::get_if<IVPProblem>(&inst)) cfg.h = ivp->h;
  return cfg;
}

IterateLoss sample_loss(const LossSpec& spec, const R2N2Config& cfg, const Dataset& ds,
                        std::size_t i) {
  spec.validate();
  IterateLoss loss;
  loss.weights = spec.iteration_weights();
  switch (spec.kind) {
    case LossSpec::Kind::residual_sum:
    case LossSpec::Kind::final_iterate:
      loss.kind = IterateLoss::Kind::residual;
      break;
    case LossSpec::Kind::target_sum:
    case LossSpec::Kind::integration_weighted: {
      loss.kind = IterateLoss::Kind::target;
      if (i >= ds.targets.size() || ds.targets[i].size() < spec.steps) {
        throw ConfigError("sample_loss: dataset has no targets for instance " + std::to_string(i));
      }
      loss.targets.assign(ds.targets[i].begin(), ds.targets[i].begin() + spec.steps);
      if (spec.kind == LossSpec::Kind::integration_weighted) {
        const double h = problems::scaling_of(ds.instances[i]);
        if (!(h > 0.0)) throw ConfigError("sample_loss: integration loss needs h > 0");
        const double p = spec.order < 0.0 ? static_cast<double>(cfg.n) : spec.order;
        const double scale = std::pow(h, -p);
        if (spec.weights.empty()) loss.weights.assign(spec.steps, 1.0);
        for (double& w : loss.weights) w *= scale;
      }
      break;
    }
  }
  return loss;
}

void attach_reference_targets(Dataset& ds, std::size_t steps, double tol) {
  ds.targets.assign(ds.instances.size(), {});
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    const auto* ivp = std::get_if<IVPProblem>(&ds.instances[i]);
    if (!ivp) continue;
    const ProblemFunction f = problems::vdp_function(ivp->a);
    Vector x = ivp->x0;
    double t = ivp->t0;
    for (std::size_t k = 0; k < steps; ++k) {
      x = reference_integrate(f.evaluate, x, t, t + ivp->h, tol);
      t += ivp->h;
      ds.targets[i].push_back(x);
    }
  }
}

double dataset_loss(const R2N2Parameters& params, const R2N2Config& cfg, const LossSpec& spec,
                    const Dataset& ds, const std::vector<std::size_t>& indices,
                    std::size_t threads) {
  if (indices.empty()) return 0.0;
  std::vector<double> partial(chunk_count(indices.size(), threads), 0.0);
  parallel_chunks(indices.size(), threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t q = b; q < e; ++q) {
      const std::size_t i = indices[q];
      const auto& inst = ds.instances[i];
      const R2N2Config local = config_for(cfg, inst);
      const Vector x0 = problems::initial_iterate(inst);
      s += rollout_loss(params, local, problems::function_of(inst), x0,
                        sample_loss(spec, local, ds, i));
    }
    partial[c] = s;
  });
  double total = 0.0;
  for (double s : partial) total += s;
  return total / static_cast<double>(indices.size());
}

LossAndGradient dataset_loss_and_gradient(const R2N2Parameters& params, const R2N2Config& cfg,
                                          const LossSpec& spec, const Dataset& ds,
                                          const std::vector<std::size_t>& indices,
                                          std::size_t threads) {
  if (indices.empty()) throw ConfigError("dataset_loss_and_gradient: no samples");
  const std::size_t chunks = chunk_count(indices.size(), threads);
  std::vector<double> loss(chunks, 0.0);
  std::vector<std::vector<double>> grad(chunks, std::vector<double>(params.size(), 0.0));
  parallel_chunks(indices.size(), threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    for (std::size_t q = b; q < e; ++q) {
      const std::size_t i = indices[q];
      const auto& inst = ds.instances[i];
      const R2N2Config local = config_for(cfg, inst);
      const Vector x0 = problems::initial_iterate(inst);
      const LossAndGradient lg = grad_rollout_loss(params, local, problems::function_of(inst), x0,
                                                   sample_loss(spec, local, ds, i));
      loss[c] += lg.loss;
      const auto flat = lg.gradient.flatten();
      for (std::size_t p = 0; p < flat.size(); ++p) grad[c][p] += flat[p];
    }
  });
  const double inv = 1.0 / static_cast<double>(indices.size());
  LossAndGradient out;
  std::vector<double> total(params.size(), 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    out.loss += loss[c];
    for (std::size_t p = 0; p < total.size(); ++p) total[p] += grad[c][p];
  }
  out.loss *= inv;
  for (double& g : total) g *= inv;
  out.gradient.shape = params;
  out.gradient.shape.assign(total);
  return out;
}

TrainingRun train(const Dataset& ds, const R2N2Config& cfg, const LossSpec& spec,
                  const TrainOptions& options) {
  cfg.validate();
  spec.validate();
  if (ds.train.empty()) throw ConfigError("train: dataset has no training samples");
  if (options.eval_every == 0) throw ConfigError("train: eval_every must be >= 1");

  TrainingRun run;
  run.seed = options.seed;
  run.epochs_requested = options.epochs;
  if (options.initial) {
    run.initial = *options.initial;
  } else {
    run.initial = R2N2Parameters::uniform(cfg.n, options.seed, options.init_low, options.init_high,
                                          options.iteration_blocks);
    run.initial.share_layers = options.share_layers;
  }
  run.initial.validate();
  run.params = run.initial;

  AdamState adam;
  adam.learning_rate = options.learning_rate;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    EpochRecord rec{epoch, nan, nan};
    try {
      const LossAndGradient lg =
          dataset_loss_and_gradient(run.params, cfg, spec, ds, ds.train, options.threads);
      rec.train_loss = lg.loss;
      if (!std::isfinite(lg.loss)) throw NonFiniteError("non-finite training loss");
      adam_step(adam, run.params, lg.gradient);
      const bool eval = epoch % options.eval_every == 0 || epoch == options.epochs;
      if (eval && !ds.test.empty()) {
        rec.test_loss = dataset_loss(run.params, cfg, spec, ds, ds.test, options.threads);
      }
    } catch (const NonFiniteError& e) {
      run.diverged = true;
      run.divergence_reason = e.what();
    } catch (const DomainError& e) {
      run.diverged = true;
      run.divergence_reason = e.what();
    }
    if (run.diverged) break;
    run.history.push_back(rec);
  }
  return run;
}

}  // namespace r2n2
