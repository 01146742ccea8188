#include "r2n2/superstructure.hpp"

#include <cmath>
#include <string>

#include "r2n2/errors.hpp"
#include "r2n2/rng.hpp"

namespace r2n2 {

void R2N2Config::validate() const {
  if (n == 0) throw ConfigError("R2N2Config: n must be >= 1");
  if (!std::isfinite(h)) throw ConfigError("R2N2Config: h must be finite");
  if (mode == LayerMode::forward_diff && !(epsilon > 0.0)) {
    throw ConfigError("R2N2Config: epsilon must be > 0 in forward-diff mode");
  }
}

ParameterBlock ParameterBlock::zeros(std::size_t n) {
  ParameterBlock b;
  b.out.assign(n, 0.0);
  b.layers.resize(n > 0 ? n - 1 : 0);
  for (std::size_t j = 1; j < n; ++j) b.layers[j - 1].assign(j, 0.0);
  return b;
}

R2N2Parameters R2N2Parameters::zeros(std::size_t n, std::size_t iteration_blocks) {
  if (n == 0) throw ConfigError("R2N2Parameters: n must be >= 1");
  if (iteration_blocks == 0) throw ConfigError("R2N2Parameters: need at least one block");
  R2N2Parameters p;
  p.n = n;
  p.blocks.assign(iteration_blocks, ParameterBlock::zeros(n));
  return p;
}

R2N2Parameters R2N2Parameters::uniform(std::size_t n, std::uint64_t seed, double lo, double hi,
                                       std::size_t iteration_blocks) {
  R2N2Parameters p = zeros(n, iteration_blocks);
  Rng rng(seed);
  std::vector<double> flat(p.size());
  for (double& v : flat) v = rng.uniform(lo, hi);
  p.assign(flat);
  return p;
}

const std::vector<std::vector<double>>& R2N2Parameters::layers_for(std::size_t iteration) const {
  return share_layers ? blocks.front().layers : blocks[block_index(iteration)].layers;
}

const std::vector<double>& R2N2Parameters::out_for(std::size_t iteration) const {
  return blocks[block_index(iteration)].out;
}

std::size_t R2N2Parameters::size() const noexcept {
  std::size_t s = 0;
  for (const auto& b : blocks) s += b.size();
  return s;
}

std::vector<double> R2N2Parameters::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const auto& b : blocks) {
    for (const auto& row : b.layers) flat.insert(flat.end(), row.begin(), row.end());
    flat.insert(flat.end(), b.out.begin(), b.out.end());
  }
  return flat;
}

void R2N2Parameters::assign(std::span<const double> flat) {
  if (flat.size() != size()) {
    throw DimensionError("R2N2Parameters::assign: expected " + std::to_string(size()) +
                         " values, got " + std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (auto& b : blocks) {
    for (auto& row : b.layers)
      for (double& v : row) v = flat[pos++];
    for (double& v : b.out) v = flat[pos++];
  }
}

void R2N2Parameters::validate() const {
  if (n == 0) throw ConfigError("R2N2Parameters: n must be >= 1");
  if (blocks.empty()) throw ConfigError("R2N2Parameters: no parameter blocks");
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    const std::string where = "R2N2Parameters block " + std::to_string(k) + ": ";
    if (b.out.size() != n) throw ConfigError(where + "theta_out must have n entries");
    if (b.layers.size() != n - 1) throw ConfigError(where + "expected n-1 inner layers");
    for (std::size_t j = 1; j < n; ++j) {
      if (b.layers[j - 1].size() != j) {
        throw ConfigError(where + "layer " + std::to_string(j) + " must have " +
                          std::to_string(j) + " coefficients");
      }
    }
  }
  for (double v : flatten()) {
    if (!std::isfinite(v)) throw ConfigError("R2N2Parameters: non-finite coefficient");
  }
}

LayerOutput layer_forward(std::span<const double> theta_j, const R2N2Config& cfg,
                          const ProblemFunction& f, std::span<const double> x_k,
                          std::span<const Vector> v_list) {
  if (theta_j.size() > v_list.size()) {
    throw DimensionError("layer_forward: more coefficients than subspace vectors");
  }
  LayerOutput out{Vector(x_k.begin(), x_k.end()), {}};
  for (std::size_t l = 0; l < theta_j.size(); ++l) {
    linalg::axpy(cfg.h * theta_j[l], v_list[l], out.x_prime);
  }
  out.v = f(out.x_prime);
  return out;
}

LayerOutput layer_forward_fd(std::span<const double> theta_j, const R2N2Config& cfg,
                             const ProblemFunction& f, std::span<const double> x_k,
                             std::span<const double> v0, std::span<const Vector> v_list) {
  if (theta_j.size() > v_list.size()) {
    throw DimensionError("layer_forward_fd: more coefficients than subspace vectors");
  }
  LayerOutput out{Vector(x_k.size(), 0.0), {}};
  for (std::size_t l = 0; l < theta_j.size(); ++l) linalg::axpy(theta_j[l], v_list[l], out.x_prime);
  Vector probe(x_k.begin(), x_k.end());
  linalg::axpy(cfg.epsilon, out.x_prime, probe);
  out.v = f(probe);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = (out.v[i] - v0[i]) / cfg.epsilon;
  return out;
}

Vector output_layer(std::span<const double> theta_out, const R2N2Config& cfg,
                    std::span<const double> x_k, std::span<const Vector> v_list) {
  if (theta_out.size() != v_list.size()) {
    throw DimensionError("output_layer: need one coefficient per subspace vector");
  }
  const double s = cfg.mode == LayerMode::direct ? cfg.h : 1.0;
  Vector x(x_k.begin(), x_k.end());
  for (std::size_t j = 0; j < v_list.size(); ++j) linalg::axpy(s * theta_out[j], v_list[j], x);
  return x;
}

ForwardResult forward_pass(const R2N2Parameters& params, const R2N2Config& cfg,
                           const ProblemFunction& f, std::span<const double> x_k,
                           std::size_t iteration) {
  if (params.n != cfg.n) throw DimensionError("forward_pass: parameter/config layer count mismatch");
  const auto& layers = params.layers_for(iteration);
  const auto& out = params.out_for(iteration);

  ForwardResult res;
  res.entry.v.reserve(cfg.n);
  res.entry.x_prime.reserve(cfg.n - 1);
  res.entry.v.push_back(f(x_k));
  for (std::size_t j = 1; j < cfg.n; ++j) {
    const std::span<const Vector> prev(res.entry.v.data(), j);
    LayerOutput lo = cfg.mode == LayerMode::direct
                         ? layer_forward(layers[j - 1], cfg, f, x_k, prev)
                         : layer_forward_fd(layers[j - 1], cfg, f, x_k, res.entry.v.front(), prev);
    res.entry.x_prime.push_back(std::move(lo.x_prime));
    res.entry.v.push_back(std::move(lo.v));
  }
  res.x_next = output_layer(out, cfg, x_k, res.entry.v);
  return res;
}

namespace {

bool diverging(double norm) { return !std::isfinite(norm) || norm > kDivergenceThreshold; }

}  // namespace

RolloutTrace rollout(const R2N2Parameters& params, const R2N2Config& cfg,
                     const ProblemFunction& f, std::span<const double> x0, std::size_t steps,
                     RolloutOptions options) {
  if (steps == 0) throw ConfigError("rollout: need at least one outer iteration");
  cfg.validate();
  RolloutTrace trace;
  trace.iterates.emplace_back(x0.begin(), x0.end());
  for (std::size_t k = 0; k < steps; ++k) {
    ForwardResult fr = forward_pass(params, cfg, f, trace.iterates.back(), k);
    const double r = linalg::norm2(fr.entry.v.front());
    trace.residual_norms.push_back(r);
    if (diverging(r)) {
      trace.diverged = true;
      return trace;
    }
    trace.steps.push_back(std::move(fr.entry));
    trace.iterates.push_back(std::move(fr.x_next));
  }
  if (options.final_residual) {
    const double r = linalg::norm2(f(trace.iterates.back()));
    trace.residual_norms.push_back(r);
    if (diverging(r)) trace.diverged = true;
  }
  return trace;
}

R2N2Parameters fd_params_to_direct(const R2N2Parameters& params_fd, const R2N2Config& cfg) {
  if (!(cfg.epsilon > 0.0)) throw ConfigError("fd_params_to_direct: epsilon must be > 0");
  if (cfg.h == 0.0) throw ConfigError("fd_params_to_direct: h must be nonzero");
  const double eps = cfg.epsilon;
  const double h = cfg.h;
  R2N2Parameters direct = params_fd;
  for (auto& block : direct.blocks) {
    for (auto& row : block.layers) {
      double tail = 0.0;
      for (std::size_t l = 1; l < row.size(); ++l) tail += row[l];
      row[0] = (eps / h) * (row[0] - tail / eps);
      for (std::size_t l = 1; l < row.size(); ++l) row[l] /= h;
    }
    double tail = 0.0;
    for (std::size_t j = 1; j < block.out.size(); ++j) tail += block.out[j];
    block.out[0] = (block.out[0] - tail / eps) / h;
    for (std::size_t j = 1; j < block.out.size(); ++j) block.out[j] /= eps * h;
  }
  return direct;
}

}  // namespace r2n2
