#include "r2n2/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "r2n2/errors.hpp"

namespace r2n2 {

double residual_reduction(const LinearProblem& p, std::span<const double> x_hat) {
  const Vector r = linalg::subtract(linalg::mat_vec(p.a, x_hat), p.b);
  return linalg::norm2(p.b) - linalg::norm2(r);
}

double residual_reduction_nk(const ProblemFunction& f, std::span<const double> x0,
                             std::span<const double> x_k) {
  return linalg::norm2(f(x0)) - linalg::norm2(f(x_k));
}

double relative_performance(double delta_method, double delta_baseline) {
  if (delta_baseline == 0.0) throw ConfigError("relative_performance: baseline reduction is zero");
  return delta_method / delta_baseline;
}

std::vector<double> theta_to_zeta(const R2N2Parameters& params, const R2N2Config& cfg) {
  if (cfg.mode != LayerMode::direct) throw ConfigError("theta_to_zeta: needs direct mode");
  if (params.per_iteration()) {
    throw ConfigError("theta_to_zeta: iteration-dependent parameters are not supported");
  }
  params.validate();
  const std::size_t n = params.n;
  const auto& block = params.blocks.front();
  const double h = cfg.h;

  // poly[j][d] is the coefficient of z^d in p_j; deg p_j <= j.
  std::vector<std::vector<double>> poly(n);
  poly[0] = {1.0};
  for (std::size_t j = 1; j < n; ++j) {
    poly[j].assign(j + 1, 0.0);
    poly[j][0] = 1.0;
    for (std::size_t l = 0; l < j; ++l) {
      const double c = h * block.layers[j - 1][l];
      for (std::size_t d = 0; d < poly[l].size(); ++d) poly[j][d + 1] += c * poly[l][d];
    }
  }
  std::vector<double> zeta(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = h * block.out[j];
    for (std::size_t d = 0; d < poly[j].size(); ++d) zeta[d] += c * poly[j][d];
  }
  return zeta;
}

AlgorithmOperator algorithm_operator(const R2N2Parameters& params, const R2N2Config& cfg,
                                     const Matrix& a) {
  if (!a.square()) throw DimensionError("algorithm_operator: A must be square");
  AlgorithmOperator op;
  op.zeta = theta_to_zeta(params, cfg);
  op.matrix = Matrix::identity(a.rows());
  Matrix power = Matrix::identity(a.rows());
  for (double z : op.zeta) {
    power = linalg::matmul(power, a);
    op.matrix = linalg::add(op.matrix, linalg::scale(z, power));
  }
  return op;
}

Certification certify_convergence(const AlgorithmOperator& op) {
  Certification c;
  c.norm = linalg::spectral_norm(op.matrix);
  if (std::abs(c.norm - 1.0) <= kMarginalBand) {
    c.verdict = Certification::Verdict::marginal;
  } else if (c.norm < 1.0) {
    c.verdict = Certification::Verdict::convergent;
  }
  c.convergent = c.verdict == Certification::Verdict::convergent;
  return c;
}

std::string to_string(Certification::Verdict v) {
  switch (v) {
    case Certification::Verdict::convergent: return "convergent";
    case Certification::Verdict::not_convergent: return "not_convergent";
    case Certification::Verdict::marginal: return "marginal";
  }
  return "not_convergent";
}

TraceStats convergence_trace_stats(const std::vector<std::vector<double>>& series) {
  if (series.empty()) throw DimensionError("convergence_trace_stats: no traces");
  const std::size_t len = series.front().size();
  TraceStats st;
  st.mean.assign(len, 0.0);
  st.min.assign(len, INFINITY);
  st.max.assign(len, -INFINITY);
  for (const auto& s : series) {
    if (s.size() != len) throw DimensionError("convergence_trace_stats: ragged traces");
    for (std::size_t k = 0; k < len; ++k) {
      st.mean[k] += s[k];
      st.min[k] = std::min(st.min[k], s[k]);
      st.max[k] = std::max(st.max[k], s[k]);
    }
  }
  for (double& m : st.mean) m /= static_cast<double>(series.size());
  return st;
}

TraceStats convergence_trace_stats(const std::vector<RolloutTrace>& traces) {
  std::vector<std::vector<double>> series;
  series.reserve(traces.size());
  for (const auto& t : traces) series.push_back(t.residual_norms);
  return convergence_trace_stats(series);
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

OrderMeasurement measure_step_order(const ButcherTableau& tableau, const VectorField& f,
                                    std::span<const double> x0, double h0, std::size_t halvings,
                                    double reference_tol) {
  OrderMeasurement m;
  double h = h0;
  for (std::size_t i = 0; i <= halvings; ++i, h *= 0.5) {
    const Vector approx = rk_step(tableau, f, x0, h);
    const Vector exact = reference_integrate(f, x0, 0.0, h, reference_tol);
    m.h.push_back(h);
    m.error.push_back(linalg::norm2(linalg::subtract(approx, exact)));
  }
  m.slope = loglog_slope(m.h, m.error);
  return m;
}

}  // namespace r2n2
