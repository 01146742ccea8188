#include "r2n2/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "r2n2/errors.hpp"

namespace r2n2 {

namespace {

void check_loss(const IterateLoss& loss, std::size_t dim) {
  if (loss.weights.empty()) throw ConfigError("IterateLoss: need at least one weight");
  if (loss.kind == IterateLoss::Kind::target) {
    if (loss.targets.size() != loss.weights.size()) {
      throw ConfigError("IterateLoss: target loss needs one target per iterate");
    }
    for (const auto& t : loss.targets) {
      if (t.size() != dim) throw DimensionError("IterateLoss: target dimension mismatch");
    }
  }
}

// What the backward sweep needs from one outer iteration.
struct Tape {
  Vector x;                     // x_k
  std::vector<Vector> v;        // v_0..v_{n-1}
  std::vector<Vector> points;   // where f was evaluated for v_1..v_{n-1}
};

struct Forward {
  std::vector<Tape> tapes;
  Vector x_final;
  Vector f_final;  // residual kind only
  double loss = 0.0;
};

Forward run_forward(const R2N2Parameters& params, const R2N2Config& cfg, const ProblemFunction& f,
                    std::span<const double> x0, const IterateLoss& loss) {
  cfg.validate();
  if (params.n != cfg.n) throw DimensionError("rollout loss: parameter/config layer count mismatch");
  check_loss(loss, x0.size());
  const std::size_t steps = loss.steps();
  const bool fd = cfg.mode == LayerMode::forward_diff;

  Forward fw;
  fw.tapes.resize(steps);
  Vector x(x0.begin(), x0.end());
  for (std::size_t k = 0; k < steps; ++k) {
    Tape& tp = fw.tapes[k];
    const auto& layers = params.layers_for(k);
    tp.v.reserve(cfg.n);
    tp.v.push_back(f(x));
    for (std::size_t j = 1; j < cfg.n; ++j) {
      const auto& theta = layers[j - 1];
      Vector point = x;
      if (fd) {
        Vector dir(x.size(), 0.0);
        for (std::size_t l = 0; l < j; ++l) linalg::axpy(theta[l], tp.v[l], dir);
        linalg::axpy(cfg.epsilon, dir, point);
        Vector fv = f(point);
        for (std::size_t i = 0; i < fv.size(); ++i) fv[i] = (fv[i] - tp.v[0][i]) / cfg.epsilon;
        tp.v.push_back(std::move(fv));
      } else {
        for (std::size_t l = 0; l < j; ++l) linalg::axpy(cfg.h * theta[l], tp.v[l], point);
        tp.v.push_back(f(point));
      }
      tp.points.push_back(std::move(point));
    }
    Vector next = output_layer(params.out_for(k), cfg, x, tp.v);
    tp.x = std::move(x);
    x = std::move(next);
  }
  fw.x_final = std::move(x);

  for (std::size_t k = 1; k <= steps; ++k) {
    const double w = loss.weights[k - 1];
    if (loss.kind == IterateLoss::Kind::residual) {
      if (k < steps) {
        fw.loss += w * linalg::dot(fw.tapes[k].v[0], fw.tapes[k].v[0]);
      } else {
        fw.f_final = f(fw.x_final);
        fw.loss += w * linalg::dot(fw.f_final, fw.f_final);
      }
    } else {
      const Vector& xk = k < steps ? fw.tapes[k].x : fw.x_final;
      const Vector d = linalg::subtract(xk, loss.targets[k - 1]);
      fw.loss += w * linalg::dot(d, d);
    }
  }
  return fw;
}

void add_into(Vector& acc, const Vector& term) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += term[i];
}

}  // namespace

double rollout_loss(const R2N2Parameters& params, const R2N2Config& cfg, const ProblemFunction& f,
                    std::span<const double> x0, const IterateLoss& loss) {
  return run_forward(params, cfg, f, x0, loss).loss;
}

LossAndGradient grad_rollout_loss(const R2N2Parameters& params, const R2N2Config& cfg,
                                  const ProblemFunction& f, std::span<const double> x0,
                                  const IterateLoss& loss, detail::GradientOptions options) {
  const Forward fw = run_forward(params, cfg, f, x0, loss);
  if (!std::isfinite(fw.loss)) throw NonFiniteError("grad_rollout_loss: non-finite loss");

  const std::size_t steps = loss.steps();
  const std::size_t n = cfg.n;
  const bool fd = cfg.mode == LayerMode::forward_diff;
  const double out_scale = fd ? 1.0 : cfg.h;
  const double layer_scale = fd ? 1.0 : cfg.h;

  LossAndGradient res;
  res.loss = fw.loss;
  res.gradient.shape = R2N2Parameters::zeros(params.n, params.blocks.size());
  res.gradient.shape.share_layers = params.share_layers;
  auto& grad_blocks = res.gradient.shape.blocks;

  // Adjoint of x_T.
  Vector xbar(fw.x_final.size(), 0.0);
  {
    const double w = loss.weights[steps - 1];
    if (loss.kind == IterateLoss::Kind::residual) {
      xbar = linalg::transpose_mat_vec(f.jacobian(fw.x_final), linalg::scale(2.0 * w, fw.f_final));
    } else {
      xbar = linalg::scale(2.0 * w, linalg::subtract(fw.x_final, loss.targets[steps - 1]));
    }
  }

  for (std::size_t k = steps; k-- > 0;) {
    const Tape& tp = fw.tapes[k];
    const auto& layers = params.layers_for(k);
    const auto& out = params.out_for(k);
    const std::size_t b = params.block_index(k);
    auto& gout = grad_blocks[b].out;
    auto& glayers = params.share_layers ? grad_blocks.front().layers : grad_blocks[b].layers;

    std::vector<Vector> vbar(n);
    for (std::size_t j = 0; j < n; ++j) {
      vbar[j] = linalg::scale(out_scale * out[j], xbar);
      gout[j] += out_scale * linalg::dot(tp.v[j], xbar);
    }
    Vector xk_bar = xbar;

    for (std::size_t j = n; j-- > 1;) {
      const Vector pbar = linalg::transpose_mat_vec(f.jacobian(tp.points[j - 1]), vbar[j]);
      if (fd) {
        // v_j = (f(x_k + eps d) - v_0) / eps with d = sum_l theta_jl v_l.
        if (!options.drop_fd_iterate_term) {
          linalg::axpy(1.0 / cfg.epsilon, pbar, xk_bar);
          linalg::axpy(-1.0 / cfg.epsilon, vbar[j], vbar[0]);
        }
      } else {
        add_into(xk_bar, pbar);
      }
      for (std::size_t l = 0; l < j; ++l) {
        linalg::axpy(layer_scale * layers[j - 1][l], pbar, vbar[l]);
        glayers[j - 1][l] += layer_scale * linalg::dot(tp.v[l], pbar);
      }
    }

    if (k == 0) break;  // x_0 does not depend on the parameters

    // v_0 = f(x_k); fold in the loss term at x_k, which also goes through J(x_k).
    const double w = loss.weights[k - 1];
    if (loss.kind == IterateLoss::Kind::residual) {
      linalg::axpy(2.0 * w, tp.v[0], vbar[0]);
      add_into(xk_bar, linalg::transpose_mat_vec(f.jacobian(tp.x), vbar[0]));
    } else {
      add_into(xk_bar, linalg::transpose_mat_vec(f.jacobian(tp.x), vbar[0]));
      linalg::axpy(2.0 * w, linalg::subtract(tp.x, loss.targets[k - 1]), xk_bar);
    }
    xbar = std::move(xk_bar);
  }

  for (double g : res.gradient.flatten()) {
    if (!std::isfinite(g)) throw NonFiniteError("grad_rollout_loss: non-finite gradient");
  }
  return res;
}

ParameterGradient finite_diff_grad(const R2N2Parameters& params, const R2N2Config& cfg,
                                   const ProblemFunction& f, std::span<const double> x0,
                                   const IterateLoss& loss, double step) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_grad: step must be > 0");
  std::vector<double> flat = params.flatten();
  std::vector<double> grad(flat.size());
  R2N2Parameters probe = params;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + step;
    probe.assign(flat);
    const double up = rollout_loss(probe, cfg, f, x0, loss);
    flat[i] = keep - step;
    probe.assign(flat);
    const double down = rollout_loss(probe, cfg, f, x0, loss);
    flat[i] = keep;
    grad[i] = (up - down) / (2.0 * step);
  }
  ParameterGradient g{R2N2Parameters::zeros(params.n, params.blocks.size())};
  g.shape.share_layers = params.share_layers;
  g.shape.assign(grad);
  return g;
}

double relative_linf_gap(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw DimensionError("relative_linf_gap: length mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, floor);
}

}  // namespace r2n2
