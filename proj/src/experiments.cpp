#include "r2n2/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>

#include "r2n2/analysis.hpp"
#include "r2n2/baselines.hpp"
#include "r2n2/errors.hpp"
#include "r2n2/plot.hpp"
#include "r2n2/rng.hpp"

namespace r2n2::experiments {

using io::Json;
namespace fs = std::filesystem;

namespace {

// --- settings -----------------------------------------------------------------

Json linear_dataset_defaults(std::vector<int> matrices) {
  return Json{{"matrices", matrices}, {"rhs_per_matrix", 100}, {"noise", 1.0}, {"seed", 1}};
}

Json chandrasekhar_dataset_defaults() {
  return Json{{"ms", {10, 20}},
              {"cs", {0.875, 0.905, 0.935}},
              {"samples_per", 50},
              {"center", 1.0},
              {"stddev", 0.2},
              {"seed", 11}};
}

Json base_defaults(const std::string& name) {
  return Json{{"preset", name},
              {"seed", 0},
              {"threads", 1},
              {"out", "runs/" + name},
              {"training",
               {{"epochs", 5000},
                {"learning_rate", 1e-3},
                {"eval_every", 100},
                {"init_low", -0.1},
                {"init_high", 0.1}}},
              {"r2n2", {{"n", 4}, {"h", 1.0}, {"layer_mode", "direct"}, {"epsilon", 1e-8}}},
              {"loss", {{"kind", "residual"}, {"T", 1}, {"weighting", "4^k"}}}};
}

Json fig5_like(const std::string& name) {
  Json d = base_defaults(name);
  d["dataset"] = linear_dataset_defaults({1});
  d["loss"]["T"] = 3;
  return d;
}

Json chandrasekhar_like(const std::string& name) {
  Json d = base_defaults(name);
  d["dataset"] = chandrasekhar_dataset_defaults();
  d["r2n2"]["n"] = 3;
  d["loss"]["T"] = 2;
  d["training"]["epochs"] = 25000;
  d["training"]["eval_every"] = 500;
  return d;
}

const std::map<std::string, std::function<Json(const std::string&)>>& registry() {
  static const std::map<std::string, std::function<Json(const std::string&)>> r = {
      {"fig4a",
       [](const std::string& n) {
         Json d = base_defaults(n);
         d["dataset"] = linear_dataset_defaults({1});
         return d;
       }},
      {"fig4b",
       [](const std::string& n) {
         Json d = base_defaults(n);
         d["dataset"] = linear_dataset_defaults({1, 2, 3});
         return d;
       }},
      {"fig5",
       [](const std::string& n) {
         Json d = fig5_like(n);
         d["eval"] = {{"steps", 5}};
         return d;
       }},
      {"embedded",
       [](const std::string& n) {
         Json d = fig5_like(n);
         d["eval"] = {{"steps", 5}, {"dim", 15}, {"q_seed", 4}};
         return d;
       }},
      {"fig6",
       [](const std::string& n) {
         Json d = chandrasekhar_like(n);
         d["eval"] = {{"extrapolation_cs", {0.85, 0.95}},
                      {"extrapolation_samples_per", 15},
                      {"large_m", 100},
                      {"large_m_samples_per", 5},
                      {"gmres_n", 3}};
         return d;
       }},
      {"nk_conv",
       [](const std::string& n) {
         Json d = chandrasekhar_like(n);
         d["eval"] = {{"steps", 8}, {"samples_per", 15}, {"shifted_center", 5.0}, {"gmres_n", 3}};
         return d;
       }},
      {"fig7",
       [](const std::string& n) {
         Json d = base_defaults(n);
         d["dataset"] = {{"count", 200}, {"seed", 13}, {"reference_tol", 1e-12}};
         d["r2n2"]["n"] = 3;
         d["loss"] = {{"kind", "integration"}, {"T", 1}, {"weighting", "uniform"}};
         d["eval"] = {{"steps", {1, 2, 3, 5}},
                      {"order_check",
                       {{"a", 1.5}, {"x0", {-3.5, 1.0}}, {"h0", 0.05}, {"halvings", 5}}}};
         return d;
       }},
      {"sm31_rhs",
       [](const std::string& n) {
         Json d = fig5_like(n);
         d["eval"] = {{"steps", 30}, {"count", 500}, {"halfwidth", 5.0}, {"rhs_seed", 5},
                      {"tolerance", 1e-6}};
         return d;
       }},
      {"sm31_noise",
       [](const std::string& n) {
         Json d = fig5_like(n);
         d["eval"] = {{"steps", 10},
                      {"sigmas", {0.3, 0.5, 0.7, 1.0}},
                      {"matrices", {{12, 13}, {14, 15}, {16, 17}, {18, 19}}}};
         return d;
       }},
      {"sm31_spectrum",
       [](const std::string& n) {
         Json d = fig5_like(n);
         d["eval"] = {{"steps", 10}, {"matrices", {4, 5, 6, 7}}};
         return d;
       }},
      {"sm31_random",
       [](const std::string& n) {
         Json d = fig5_like(n);
         d["eval"] = {{"steps", 10}, {"matrices", {8, 9, 10, 11}}};
         return d;
       }},
      {"sm33",
       [](const std::string& n) {
         Json d = base_defaults(n);
         d["dataset"] = linear_dataset_defaults({1});
         d["r2n2"]["n"] = 2;
         d["loss"] = {{"kind", "final_iterate"}, {"T", 2}, {"weighting", "uniform"}};
         d["eval"] = {{"steps", 6}, {"Ts", {2, 3, 4, 5}}, {"share_layers", true}};
         return d;
       }},
  };
  return r;
}

template <class T>
T get(const Json& s, const std::string& pointer) {
  try {
    return s.at(Json::json_pointer(pointer)).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("setting " + pointer + ": " + e.what());
  }
}

R2N2Config make_config(const Json& s) {
  R2N2Config cfg;
  cfg.n = get<std::size_t>(s, "/r2n2/n");
  cfg.h = get<double>(s, "/r2n2/h");
  cfg.mode = io::layer_mode_from_string(get<std::string>(s, "/r2n2/layer_mode"));
  cfg.epsilon = get<double>(s, "/r2n2/epsilon");
  cfg.validate();
  return cfg;
}

LossSpec make_loss(const Json& s) {
  LossSpec spec;
  spec.kind = loss_kind_from_string(get<std::string>(s, "/loss/kind"));
  spec.steps = get<std::size_t>(s, "/loss/T");
  const std::string w = get<std::string>(s, "/loss/weighting");
  if (w == "4^k") {
    spec.weighting = LossSpec::Weighting::power4;
  } else if (w == "uniform") {
    spec.weighting = LossSpec::Weighting::uniform;
  } else {
    throw ConfigError("loss.weighting must be \"4^k\" or \"uniform\"");
  }
  const Json& l = s.at("loss");
  if (l.contains("weights")) spec.weights = l.at("weights").get<std::vector<double>>();
  if (l.contains("order")) spec.order = l.at("order").get<double>();
  spec.validate();
  return spec;
}

TrainOptions make_train_options(const Json& s) {
  TrainOptions o;
  o.epochs = get<std::size_t>(s, "/training/epochs");
  o.learning_rate = get<double>(s, "/training/learning_rate");
  o.eval_every = get<std::size_t>(s, "/training/eval_every");
  o.init_low = get<double>(s, "/training/init_low");
  o.init_high = get<double>(s, "/training/init_high");
  o.seed = get<std::uint64_t>(s, "/seed");
  o.threads = get<std::size_t>(s, "/threads");
  if (o.threads == 0) throw ConfigError("threads must be >= 1");
  return o;
}

// --- output helpers --------------------------------------------------------------

std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class Output {
 public:
  Output(fs::path dir, std::vector<fs::path>* artifacts) : dir_(std::move(dir)), artifacts_(artifacts) {}

  fs::path path(const std::string& name) const { return dir_ / name; }

  void csv(const std::string& name, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path(name));
    if (!out) throw ConfigError("cannot write " + path(name).string());
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    }
    artifacts_->push_back(path(name));
  }

  void json(const std::string& name, const Json& j) {
    io::write_json_file(path(name), j);
    artifacts_->push_back(path(name));
  }

  void plot(const std::string& csv_name, plot::Kind kind, const std::string& svg_name,
            const plot::PlotOptions& opts) {
    plot::emit_plot(path(csv_name), kind, path(svg_name), opts);
    artifacts_->push_back(path(svg_name));
  }

  void training(const TrainingRun& run, const R2N2Config& cfg, const LossSpec& spec,
                const std::string& suffix = "") {
    json("params" + suffix + ".json", io::params_to_json(run.params, cfg));
    json("run" + suffix + ".json", io::run_manifest(run, cfg, spec));
    io::write_loss_csv(path("loss" + suffix + ".csv"), run);
    artifacts_->push_back(path("loss" + suffix + ".csv"));
  }

 private:
  fs::path dir_;
  std::vector<fs::path>* artifacts_;
};

struct Context {
  const Json& s;
  Output& out;
  PresetResult& result;
};

// --- shared evaluation -------------------------------------------------------------

/// ||f(x_k)||, k = 0..steps. Entries past a divergence are +inf; a domain
/// error leaves the rest NaN.
std::vector<double> r2n2_series(const R2N2Parameters& params, const R2N2Config& cfg,
                                const ProblemFunction& f, std::span<const double> x0,
                                std::size_t steps) {
  std::vector<double> s(steps + 1, std::numeric_limits<double>::quiet_NaN());
  try {
    const RolloutTrace tr = rollout(params, cfg, f, x0, steps);
    std::copy(tr.residual_norms.begin(), tr.residual_norms.end(), s.begin());
    if (tr.diverged) {
      for (std::size_t k = tr.residual_norms.size(); k <= steps; ++k) s[k] = INFINITY;
    }
  } catch (const DomainError&) {
  }
  return s;
}

std::vector<double> gmres_series(const LinearProblem& p, std::size_t n, std::size_t steps) {
  const Vector x0(p.b.size(), 0.0);
  return gmres_restarted(matrix_operator(p.a), p.b, x0, n, steps).residual_norms;
}

std::vector<double> nk_series(const ProblemFunction& f, std::span<const double> x0, std::size_t n,
                              std::size_t steps) {
  std::vector<double> s(steps + 1, std::numeric_limits<double>::quiet_NaN());
  Vector x(x0.begin(), x0.end());
  try {
    s[0] = linalg::norm2(f(x));
    for (std::size_t k = 1; k <= steps; ++k) {
      x = nk_gmres_step(f, x, n);
      s[k] = linalg::norm2(f(x));
      if (!std::isfinite(s[k])) break;
    }
  } catch (const DomainError&) {
  }
  return s;
}

/// Mean/min/max per k over series whose entries are finite or +inf; NaN
/// (domain failure) series are skipped.
TraceStats summarize(const std::vector<std::vector<double>>& series, std::size_t* skipped = nullptr) {
  std::vector<std::vector<double>> kept;
  for (const auto& s : series) {
    if (std::none_of(s.begin(), s.end(), [](double v) { return std::isnan(v); })) kept.push_back(s);
  }
  if (skipped) *skipped = series.size() - kept.size();
  if (kept.empty()) {
    const std::size_t len = series.empty() ? 0 : series.front().size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {std::vector<double>(len, nan), std::vector<double>(len, nan),
            std::vector<double>(len, nan)};
  }
  return convergence_trace_stats(kept);
}

std::vector<const LinearProblem*> linear_subset(const Dataset& ds,
                                                const std::vector<std::size_t>& idx) {
  std::vector<const LinearProblem*> out;
  for (auto i : idx) out.push_back(&std::get<LinearProblem>(ds.instances[i]));
  return out;
}

Dataset make_linear_dataset(const Json& s) {
  std::vector<Matrix> mats;
  for (int id : get<std::vector<int>>(s, "/dataset/matrices")) mats.push_back(problems::builtin_matrix(id));
  Dataset ds = problems::gen_linear_dataset(mats, problems::builtin_b_tilde(),
                                            get<double>(s, "/dataset/noise"),
                                            get<std::size_t>(s, "/dataset/rhs_per_matrix"),
                                            get<std::uint64_t>(s, "/dataset/seed"));
  ds.params_json = s.at("dataset").dump();
  return ds;
}

problems::ChandrasekharSampling chandrasekhar_sampling(const Json& s) {
  problems::ChandrasekharSampling c;
  c.ms = get<std::vector<std::size_t>>(s, "/dataset/ms");
  c.cs = get<std::vector<double>>(s, "/dataset/cs");
  c.samples_per = get<std::size_t>(s, "/dataset/samples_per");
  c.center = get<double>(s, "/dataset/center");
  c.stddev = get<double>(s, "/dataset/stddev");
  return c;
}

Dataset make_chandrasekhar_dataset(const Json& s) {
  Dataset ds = problems::gen_chandrasekhar_dataset(chandrasekhar_sampling(s),
                                                   get<std::uint64_t>(s, "/dataset/seed"));
  ds.params_json = s.at("dataset").dump();
  return ds;
}

/// Trains with the preset's settings, writes the usual artifacts and records
/// divergence in the result.
TrainingRun train_and_record(Context& ctx, const Dataset& ds, const R2N2Config& cfg,
                             const LossSpec& spec, TrainOptions opts, const std::string& suffix = "") {
  TrainingRun run = train(ds, cfg, spec, opts);
  ctx.out.training(run, cfg, spec, suffix);
  if (run.diverged) ctx.result.exit_code = 2;
  ctx.result.run = run;
  return run;
}

std::vector<std::string> k_header(const std::vector<std::string>& series) {
  std::vector<std::string> h{"k"};
  h.insert(h.end(), series.begin(), series.end());
  return h;
}

std::vector<std::vector<std::string>> k_rows(const std::vector<std::vector<double>>& columns) {
  std::vector<std::vector<std::string>> rows;
  const std::size_t len = columns.empty() ? 0 : columns.front().size();
  for (std::size_t k = 0; k < len; ++k) {
    std::vector<std::string> r{std::to_string(k)};
    for (const auto& c : columns) r.push_back(num(c[k]));
    rows.push_back(std::move(r));
  }
  return rows;
}

bool strictly_decreasing(const std::vector<double>& v, std::size_t from) {
  for (std::size_t k = from + 1; k < v.size(); ++k) {
    if (!(v[k] < v[k - 1])) return false;
  }
  return true;
}

// --- presets -------------------------------------------------------------------------

Json run_linear_ratio(Context& ctx) {
  const Json& s = ctx.s;
  Dataset ds = make_linear_dataset(s);
  const R2N2Config cfg = make_config(s);
  const LossSpec spec = make_loss(s);
  ctx.out.json("dataset.json", io::dataset_to_json(ds));
  const TrainingRun run = train_and_record(ctx, ds, cfg, spec, make_train_options(s));
  const auto matrices = get<std::vector<int>>(s, "/dataset/matrices");
  const std::size_t per = get<std::size_t>(s, "/dataset/rhs_per_matrix");

  std::vector<std::vector<std::string>> test_rows, train_rows;
  std::map<std::string, std::vector<double>> by_set;
  auto eval = [&](const std::vector<std::size_t>& idx, const std::string& split,
                  std::vector<std::vector<std::string>>& rows) {
    for (auto i : idx) {
      const auto& p = std::get<LinearProblem>(ds.instances[i]);
      const Vector x0(p.b.size(), 0.0);
      const RolloutTrace tr = rollout(run.params, cfg, problems::linear_function(p), x0, 1);
      const GmresResult g = gmres_cycle(matrix_operator(p.a), p.b, x0, cfg.n);
      const double dr = tr.diverged ? -INFINITY : residual_reduction(p, tr.iterates[1]);
      const double dg = residual_reduction(p, g.x);
      const double ratio = relative_performance(dr, dg);
      const std::string set =
          split + (matrices.size() > 1 ? " A" + std::to_string(matrices[i / per]) : "");
      by_set[set].push_back(ratio);
      rows.push_back({std::to_string(i), set, std::to_string(matrices[i / per]), num(dr), num(dg),
                      num(ratio)});
    }
  };
  eval(ds.train, "train", train_rows);
  eval(ds.test, "test", test_rows);
  const std::vector<std::string> header{"sample_id", "set", "matrix", "delta_r2n2", "delta_gmres", "ratio"};
  ctx.out.csv("ratio.csv", header, test_rows);
  ctx.out.csv("ratio_train.csv", header, train_rows);
  ctx.out.plot("ratio.csv", plot::Kind::scatter_ratio, "ratio.svg",
               {"R2N2 vs GMRES(" + std::to_string(cfg.n) + "), one step", std::nullopt});

  Json summary = Json::object();
  std::vector<double> test_all;
  for (const auto& [set, v] : by_set) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    summary["mean_ratio"][set] = mean;
    if (set.rfind("test", 0) == 0) test_all.insert(test_all.end(), v.begin(), v.end());
  }
  summary["test_mean_ratio"] =
      std::accumulate(test_all.begin(), test_all.end(), 0.0) / static_cast<double>(test_all.size());
  summary["test_max_ratio"] = *std::max_element(test_all.begin(), test_all.end());
  ctx.result.dataset = std::move(ds);
  return summary;
}

struct LinearEvalSet {
  std::string name;
  std::vector<LinearProblem> problems;
};

/// Convergence table of the trained network on several problem sets, plus
/// restarted GMRES on the first set.
Json linear_convergence(Context& ctx, const R2N2Parameters& params, const R2N2Config& cfg,
                        const std::vector<LinearEvalSet>& sets, std::size_t steps,
                        const std::string& stem, const std::string& title, bool with_gmres = true) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  std::vector<std::vector<std::string>> samples;
  Json summary = Json::object();
  for (const auto& set : sets) {
    std::vector<std::vector<double>> series;
    for (std::size_t i = 0; i < set.problems.size(); ++i) {
      const auto& p = set.problems[i];
      series.push_back(r2n2_series(params, cfg, problems::linear_function(p), Vector(p.b.size(), 0.0), steps));
      for (std::size_t k = 0; k <= steps; ++k) {
        samples.push_back({set.name, std::to_string(i), std::to_string(k), num(series.back()[k])});
      }
    }
    const TraceStats st = summarize(series);
    names.push_back("r2n2 " + set.name);
    columns.push_back(st.mean);
    summary[set.name] = {{"mean", st.mean}, {"min", st.min}, {"max", st.max}};
  }
  if (with_gmres && !sets.empty()) {
    std::vector<std::vector<double>> series;
    for (const auto& p : sets.front().problems) series.push_back(gmres_series(p, cfg.n, steps));
    const TraceStats st = summarize(series);
    names.push_back("gmres " + sets.front().name);
    columns.push_back(st.mean);
    summary["gmres " + sets.front().name] = {{"mean", st.mean}};
  }
  ctx.out.csv(stem + ".csv", k_header(names), k_rows(columns));
  ctx.out.csv(stem + "_samples.csv", {"set", "sample_id", "k", "residual_norm"}, samples);
  ctx.out.plot(stem + ".csv", plot::Kind::convergence_lines, stem + ".svg", {title, std::nullopt});
  return summary;
}

std::vector<LinearProblem> test_problems(const Dataset& ds) {
  std::vector<LinearProblem> out;
  for (const auto* p : linear_subset(ds, ds.test)) out.push_back(*p);
  return out;
}

std::vector<LinearProblem> train_problems(const Dataset& ds) {
  std::vector<LinearProblem> out;
  for (const auto* p : linear_subset(ds, ds.train)) out.push_back(*p);
  return out;
}

/// Same RHS, different matrix.
std::vector<LinearProblem> with_matrix(const std::vector<LinearProblem>& base, const Matrix& a) {
  std::vector<LinearProblem> out;
  for (const auto& p : base) out.push_back({a, p.b});
  return out;
}

Json certify_json(const R2N2Parameters& params, const R2N2Config& cfg, const Matrix& a) {
  const AlgorithmOperator op = algorithm_operator(params, cfg, a);
  const Certification c = certify_convergence(op);
  return Json{{"norm", c.norm}, {"verdict", to_string(c.verdict)}, {"zeta", op.zeta}};
}

struct TrainedLinear {
  Dataset ds;
  R2N2Config cfg;
  TrainingRun run;
};

TrainedLinear train_fig5_like(Context& ctx) {
  TrainedLinear t;
  t.ds = make_linear_dataset(ctx.s);
  t.cfg = make_config(ctx.s);
  const LossSpec spec = make_loss(ctx.s);
  ctx.out.json("dataset.json", io::dataset_to_json(t.ds));
  t.run = train_and_record(ctx, t.ds, t.cfg, spec, make_train_options(ctx.s));
  return t;
}

Json run_fig5(Context& ctx) {
  TrainedLinear t = train_fig5_like(ctx);
  const std::size_t steps = get<std::size_t>(ctx.s, "/eval/steps");
  Json summary;
  summary["convergence"] = linear_convergence(
      ctx, t.run.params, t.cfg, {{"test", test_problems(t.ds)}, {"train", train_problems(t.ds)}},
      steps, "convergence", "R2N2 vs GMRES(r) on A1");
  const auto mean = summary["convergence"]["test"]["mean"].get<std::vector<double>>();
  summary["test_mean_strictly_decreasing"] = strictly_decreasing(mean, 0);
  summary["certification_A1"] = certify_json(t.run.params, t.cfg, problems::builtin_matrix(1));
  ctx.out.json("certify.json", summary["certification_A1"]);
  ctx.result.dataset = std::move(t.ds);
  return summary;
}

Json run_embedded(Context& ctx) {
  TrainedLinear t = train_fig5_like(ctx);
  const std::size_t steps = get<std::size_t>(ctx.s, "/eval/steps");
  const std::size_t dim = get<std::size_t>(ctx.s, "/eval/dim");
  const Matrix q = linalg::haar_orthogonal(dim, get<std::uint64_t>(ctx.s, "/eval/q_seed"));
  std::vector<LinearProblem> base = test_problems(t.ds), lifted;
  for (const auto& p : base) lifted.push_back(problems::embed_problem(p, q));
  Json summary;
  summary["convergence"] =
      linear_convergence(ctx, t.run.params, t.cfg, {{"embedded", lifted}, {"original", base}}, steps,
                         "convergence", "R2N2 on the embedded problem");
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto a = r2n2_series(t.run.params, t.cfg, problems::linear_function(base[i]),
                               Vector(base[i].b.size(), 0.0), steps);
    const auto b = r2n2_series(t.run.params, t.cfg, problems::linear_function(lifted[i]),
                               Vector(dim, 0.0), steps);
    for (std::size_t k = 0; k <= steps; ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  }
  summary["max_abs_trace_difference"] = worst;
  ctx.result.dataset = std::move(t.ds);
  return summary;
}

std::vector<const NonlinearInstance*> nonlinear_subset(const Dataset& ds,
                                                       const std::vector<std::size_t>& idx) {
  std::vector<const NonlinearInstance*> out;
  for (auto i : idx) out.push_back(&std::get<NonlinearInstance>(ds.instances[i]));
  return out;
}

std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> v(ds.instances.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Json run_fig6(Context& ctx) {
  const Json& s = ctx.s;
  Dataset ds = make_chandrasekhar_dataset(s);
  const R2N2Config cfg = make_config(s);
  const LossSpec spec = make_loss(s);
  ctx.out.json("dataset.json", io::dataset_to_json(ds));
  const TrainingRun run = train_and_record(ctx, ds, cfg, spec, make_train_options(s));
  const std::size_t gn = get<std::size_t>(s, "/eval/gmres_n");
  const std::uint64_t seed = get<std::uint64_t>(s, "/dataset/seed");

  problems::ChandrasekharSampling extra = chandrasekhar_sampling(s);
  extra.cs = get<std::vector<double>>(s, "/eval/extrapolation_cs");
  extra.samples_per = get<std::size_t>(s, "/eval/extrapolation_samples_per");
  const Dataset ds_extra = problems::gen_chandrasekhar_dataset(extra, derive_seed(seed, 101));
  problems::ChandrasekharSampling large = chandrasekhar_sampling(s);
  large.ms = {get<std::size_t>(s, "/eval/large_m")};
  large.samples_per = get<std::size_t>(s, "/eval/large_m_samples_per");
  const Dataset ds_large = problems::gen_chandrasekhar_dataset(large, derive_seed(seed, 102));

  std::vector<std::vector<std::string>> rows, k2_rows;
  std::map<std::string, std::pair<std::size_t, std::size_t>> wins;  // set -> (wins at k=2, count)
  std::map<std::string, std::size_t> failures;
  std::size_t sid = 0;
  auto eval = [&](const std::vector<const NonlinearInstance*>& insts, const std::string& set) {
    for (const auto* ni : insts) {
      const ProblemFunction f = problems::chandrasekhar_function(ni->problem);
      double ratio[3] = {NAN, NAN, NAN};
      try {
        const RolloutTrace tr = rollout(run.params, cfg, f, ni->x0, 2);
        const auto nk = nk_gmres(f, ni->x0, gn, 2);
        for (std::size_t k = 1; k <= 2; ++k) {
          const double dm = tr.iterates.size() > k ? residual_reduction_nk(f, ni->x0, tr.iterates[k]) : -INFINITY;
          ratio[k] = relative_performance(dm, residual_reduction_nk(f, ni->x0, nk[k]));
        }
      } catch (const DomainError&) {
        ++failures[set];
      }
      for (std::size_t k = 1; k <= 2; ++k) {
        rows.push_back({std::to_string(sid), set, std::to_string(ni->problem.m), num(ni->problem.c),
                        std::to_string(k), num(ratio[k])});
      }
      k2_rows.push_back({std::to_string(sid), set, num(ratio[2])});
      auto& w = wins[set];
      w.first += ratio[2] > 1.0 ? 1 : 0;
      w.second += 1;
      ++sid;
    }
  };
  eval(nonlinear_subset(ds, ds.test), "test");
  eval(nonlinear_subset(ds_extra, all_indices(ds_extra)), "extrapolated c");
  eval(nonlinear_subset(ds_large, all_indices(ds_large)), "m=" + std::to_string(large.ms.front()));
  ctx.out.csv("ratios.csv", {"sample_id", "set", "m", "c", "k", "ratio"}, rows);
  ctx.out.csv("ratio_k2.csv", {"sample_id", "set", "ratio"}, k2_rows);
  ctx.out.plot("ratio_k2.csv", plot::Kind::scatter_ratio, "ratio_k2.svg",
               {"R2N2 vs NK-GMRES after two iterations", std::nullopt});
  Json summary;
  for (const auto& [set, w] : wins) {
    summary["fraction_ratio_above_1_k2"][set] = static_cast<double>(w.first) / static_cast<double>(w.second);
    summary["domain_failures"][set] = failures[set];
  }
  ctx.result.dataset = std::move(ds);
  return summary;
}

Json run_nk_conv(Context& ctx) {
  const Json& s = ctx.s;
  Dataset ds = make_chandrasekhar_dataset(s);
  const R2N2Config cfg = make_config(s);
  const LossSpec spec = make_loss(s);
  ctx.out.json("dataset.json", io::dataset_to_json(ds));
  const TrainingRun run = train_and_record(ctx, ds, cfg, spec, make_train_options(s));
  const std::size_t steps = get<std::size_t>(s, "/eval/steps");
  const std::size_t gn = get<std::size_t>(s, "/eval/gmres_n");
  const std::uint64_t seed = get<std::uint64_t>(s, "/dataset/seed");

  problems::ChandrasekharSampling wide = chandrasekhar_sampling(s);
  wide.samples_per = get<std::size_t>(s, "/eval/samples_per");
  wide.stddev *= std::sqrt(10.0);  // ten times the variance
  problems::ChandrasekharSampling shifted = chandrasekhar_sampling(s);
  shifted.samples_per = wide.samples_per;
  shifted.center = get<double>(s, "/eval/shifted_center");
  const Dataset ds_wide = problems::gen_chandrasekhar_dataset(wide, derive_seed(seed, 201));
  const Dataset ds_shift = problems::gen_chandrasekhar_dataset(shifted, derive_seed(seed, 202));

  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  Json summary;
  auto eval = [&](const std::vector<const NonlinearInstance*>& insts, const std::string& set) {
    std::vector<std::vector<double>> rs, ns;
    for (const auto* ni : insts) {
      const ProblemFunction f = problems::chandrasekhar_function(ni->problem);
      rs.push_back(r2n2_series(run.params, cfg, f, ni->x0, steps));
      ns.push_back(nk_series(f, ni->x0, gn, steps));
    }
    std::size_t skipped_r = 0, skipped_n = 0;
    const TraceStats a = summarize(rs, &skipped_r);
    const TraceStats b = summarize(ns, &skipped_n);
    names.push_back("r2n2 " + set);
    columns.push_back(a.mean);
    names.push_back("nk " + set);
    columns.push_back(b.mean);
    summary[set] = {{"r2n2_mean", a.mean}, {"nk_mean", b.mean},
                    {"r2n2_domain_failures", skipped_r}, {"nk_domain_failures", skipped_n}};
  };
  eval(nonlinear_subset(ds, ds.test), "x0");
  eval(nonlinear_subset(ds_wide, all_indices(ds_wide)), "x0'");
  eval(nonlinear_subset(ds_shift, all_indices(ds_shift)), "x0''");
  ctx.out.csv("convergence.csv", k_header(names), k_rows(columns));
  ctx.out.plot("convergence.csv", plot::Kind::convergence_lines, "convergence.svg",
               {"R2N2 vs NK-GMRES over nonlinear iterations", std::nullopt});
  ctx.result.dataset = std::move(ds);
  return summary;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Json run_fig7(Context& ctx) {
  const Json& s = ctx.s;
  const auto ks = get<std::vector<std::size_t>>(s, "/eval/steps");
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  const LossSpec spec = make_loss(s);
  Dataset ds = problems::gen_ivp_dataset(get<std::size_t>(s, "/dataset/count"),
                                         get<std::uint64_t>(s, "/dataset/seed"));
  ds.params_json = s.at("dataset").dump();
  attach_reference_targets(ds, std::max(kmax, spec.steps), get<double>(s, "/dataset/reference_tol"));
  const R2N2Config cfg = make_config(s);
  ctx.out.json("dataset.json", io::dataset_to_json(ds));
  const TrainingRun run = train_and_record(ctx, ds, cfg, spec, make_train_options(s));
  const ButcherTableau rk = rk_tableau(cfg.n);

  std::vector<std::vector<std::string>> rows;
  std::map<std::size_t, std::vector<std::vector<std::string>>> by_h;
  Json summary;
  for (std::size_t k : ks) {
    std::vector<double> er, ek;
    std::vector<std::pair<double, std::pair<double, double>>> pts;
    for (auto i : ds.test) {
      const auto& p = std::get<IVPProblem>(ds.instances[i]);
      const ProblemFunction f = problems::vdp_function(p.a);
      const RolloutTrace tr = rollout(run.params, config_for(cfg, ds.instances[i]), f, p.x0, k);
      Vector x = p.x0;
      for (std::size_t q = 0; q < k; ++q) x = rk_step(rk, f.evaluate, x, p.h);
      const Vector& target = ds.targets[i][k - 1];
      const double e_r = tr.diverged ? INFINITY : linalg::norm2(linalg::subtract(tr.iterates[k], target));
      const double e_k = linalg::norm2(linalg::subtract(x, target));
      er.push_back(e_r);
      ek.push_back(e_k);
      rows.push_back({std::to_string(i), num(p.h), num(p.a), std::to_string(k), num(e_r), num(e_k)});
      pts.push_back({p.h, {e_r, e_k}});
    }
    std::sort(pts.begin(), pts.end());
    auto& tab = by_h[k];
    for (const auto& [h, e] : pts) tab.push_back({num(h), num(e.first), num(e.second)});
    summary["median_error"]["k=" + std::to_string(k)] = {{"r2n2", median(er)}, {rk.name, median(ek)}};
  }
  ctx.out.csv("errors.csv", {"sample_id", "h", "a", "k", "err_r2n2", "err_rk"}, rows);
  for (const auto& [k, tab] : by_h) {
    const std::string stem = "error_vs_h_k" + std::to_string(k);
    ctx.out.csv(stem + ".csv", {"h", "r2n2", "rk" + std::to_string(cfg.n)}, tab);
    ctx.out.plot(stem + ".csv", plot::Kind::error_vs_h, stem + ".svg",
                 {"Error after " + std::to_string(k) + " step(s)", static_cast<double>(cfg.n + 1)});
  }

  const Json& oc = s.at("eval").at("order_check");
  const OrderMeasurement m = measure_step_order(
      rk, problems::vdp_function(oc.at("a").get<double>()).evaluate, oc.at("x0").get<Vector>(),
      oc.at("h0").get<double>(), oc.at("halvings").get<std::size_t>());
  std::vector<std::vector<std::string>> orows;
  for (std::size_t i = 0; i < m.h.size(); ++i) orows.push_back({num(m.h[i]), num(m.error[i])});
  ctx.out.csv("order.csv", {"h", rk.name}, orows);
  ctx.out.plot("order.csv", plot::Kind::error_vs_h, "order.svg",
               {"One-step error of " + rk.name, static_cast<double>(cfg.n + 1)});
  summary["order_slope"] = m.slope;
  ctx.result.dataset = std::move(ds);
  return summary;
}

Json run_sm31_rhs(Context& ctx) {
  TrainedLinear t = train_fig5_like(ctx);
  const std::size_t steps = get<std::size_t>(ctx.s, "/eval/steps");
  const double tol = get<double>(ctx.s, "/eval/tolerance");
  const Matrix a1 = problems::builtin_matrix(get<std::vector<int>>(ctx.s, "/dataset/matrices").front());
  const Vector zero(a1.rows(), 0.0);
  std::vector<LinearProblem> arbitrary;
  for (auto& b : problems::sample_rhs(zero, get<double>(ctx.s, "/eval/halfwidth"),
                                      get<std::size_t>(ctx.s, "/eval/count"),
                                      get<std::uint64_t>(ctx.s, "/eval/rhs_seed"))) {
    arbitrary.push_back({a1, std::move(b)});
  }
  Json summary;
  summary["convergence"] =
      linear_convergence(ctx, t.run.params, t.cfg, {{"b_all", arbitrary}, {"b_train", train_problems(t.ds)}},
                         steps, "convergence", "R2N2 on arbitrary right-hand sides");
  std::size_t converged = 0;
  for (const auto& p : arbitrary) {
    const auto sr = r2n2_series(t.run.params, t.cfg, problems::linear_function(p), zero, steps);
    converged += sr.back() <= tol * sr.front() ? 1 : 0;
  }
  summary["fraction_converged"] = static_cast<double>(converged) / static_cast<double>(arbitrary.size());
  summary["certification"] = certify_json(t.run.params, t.cfg, a1);
  ctx.result.dataset = std::move(t.ds);
  return summary;
}

Json run_sm31_matrices(Context& ctx, const std::vector<std::pair<std::string, std::vector<int>>>& groups,
                       const std::string& title) {
  TrainedLinear t = train_fig5_like(ctx);
  const std::size_t steps = get<std::size_t>(ctx.s, "/eval/steps");
  const std::vector<LinearProblem> base = test_problems(t.ds);
  std::vector<LinearEvalSet> sets{{"train setting", base}};
  std::vector<std::vector<std::string>> cert_rows;
  Json summary;
  for (const auto& [name, ids] : groups) {
    LinearEvalSet set{name, {}};
    for (int id : ids) {
      const Matrix a = problems::builtin_matrix(id);
      const auto ps = with_matrix(base, a);
      set.problems.insert(set.problems.end(), ps.begin(), ps.end());
      const Json c = certify_json(t.run.params, t.cfg, a);
      cert_rows.push_back({"A" + std::to_string(id), num(c["norm"].get<double>()), c["verdict"].get<std::string>()});
      summary["certification"]["A" + std::to_string(id)] = c;
    }
    sets.push_back(std::move(set));
  }
  summary["convergence"] = linear_convergence(ctx, t.run.params, t.cfg, sets, steps, "convergence", title);
  ctx.out.csv("certify.csv", {"matrix", "norm", "verdict"}, cert_rows);
  ctx.result.dataset = std::move(t.ds);
  return summary;
}

Json run_sm31_noise(Context& ctx) {
  const auto sigmas = get<std::vector<double>>(ctx.s, "/eval/sigmas");
  const auto mats = get<std::vector<std::vector<int>>>(ctx.s, "/eval/matrices");
  if (sigmas.size() != mats.size()) throw ConfigError("eval.sigmas and eval.matrices differ in length");
  std::vector<std::pair<std::string, std::vector<int>>> groups;
  for (std::size_t i = 0; i < sigmas.size(); ++i) groups.push_back({"sigma=" + num(sigmas[i]), mats[i]});
  return run_sm31_matrices(ctx, groups, "R2N2 on noisier matrices");
}

Json run_sm31_list(Context& ctx, const std::string& title) {
  std::vector<std::pair<std::string, std::vector<int>>> groups;
  for (int id : get<std::vector<int>>(ctx.s, "/eval/matrices")) groups.push_back({"A" + std::to_string(id), {id}});
  return run_sm31_matrices(ctx, groups, title);
}

Json run_sm33(Context& ctx) {
  const Json& s = ctx.s;
  Dataset ds = make_linear_dataset(s);
  const R2N2Config cfg = make_config(s);
  const std::size_t steps = get<std::size_t>(s, "/eval/steps");
  ctx.out.json("dataset.json", io::dataset_to_json(ds));
  const auto test = test_problems(ds);

  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  Json summary;
  for (std::size_t t : get<std::vector<std::size_t>>(s, "/eval/Ts")) {
    LossSpec spec = make_loss(s);
    spec.steps = t;
    TrainOptions opts = make_train_options(s);
    opts.iteration_blocks = t;
    opts.share_layers = get<bool>(s, "/eval/share_layers");
    const TrainingRun run = train_and_record(ctx, ds, cfg, spec, opts, "_T" + std::to_string(t));
    std::vector<std::vector<double>> series;
    for (const auto& p : test) {
      series.push_back(r2n2_series(run.params, cfg, problems::linear_function(p), Vector(p.b.size(), 0.0), steps));
    }
    const TraceStats st = summarize(series);
    names.push_back("r2n2 T=" + std::to_string(t));
    columns.push_back(st.mean);
    summary["T=" + std::to_string(t)] = st.mean;
  }
  std::vector<std::vector<double>> gs;
  for (const auto& p : test) gs.push_back(gmres_series(p, cfg.n, steps));
  names.push_back("gmres");
  columns.push_back(summarize(gs).mean);
  summary["gmres"] = columns.back();
  ctx.out.csv("convergence.csv", k_header(names), k_rows(columns));
  ctx.out.plot("convergence.csv", plot::Kind::convergence_lines, "convergence.svg",
               {"Iteration-dependent output layer, final-iterate loss", std::nullopt});
  ctx.result.dataset = std::move(ds);
  return summary;
}

using Runner = std::function<Json(Context&)>;

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> r = {
      {"fig4a", run_linear_ratio},
      {"fig4b", run_linear_ratio},
      {"fig5", run_fig5},
      {"embedded", run_embedded},
      {"fig6", run_fig6},
      {"nk_conv", run_nk_conv},
      {"fig7", run_fig7},
      {"sm31_rhs", run_sm31_rhs},
      {"sm31_noise", run_sm31_noise},
      {"sm31_spectrum",
       [](Context& c) { return run_sm31_list(c, "R2N2 with a shifted diagonal spectrum"); }},
      {"sm31_random",
       [](Context& c) { return run_sm31_list(c, "R2N2 on random symmetric matrices"); }},
      {"sm33", run_sm33},
  };
  return r;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

Json preset_defaults(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second(name);
}

Json resolve_settings(const ExperimentConfig& config) {
  Json s = preset_defaults(config.preset);
  Json file = config.file.is_null() ? Json::object() : config.file;
  if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
  if (file.contains("epochs")) {
    file["training"]["epochs"] = file["epochs"];
    file.erase("epochs");
  }
  if (file.contains("preset") && file["preset"] != config.preset) {
    throw ConfigError("config file is for preset '" + file["preset"].dump() + "'");
  }
  s.merge_patch(file);
  if (config.seed) s["seed"] = *config.seed;
  if (config.epochs) s["training"]["epochs"] = *config.epochs;
  if (config.threads) s["threads"] = *config.threads;
  if (config.out_dir) s["out"] = config.out_dir->string();
  return s;
}

PresetResult run_preset(const ExperimentConfig& config) {
  PresetResult result;
  result.preset = config.preset;
  result.settings = resolve_settings(config);
  result.cfg = make_config(result.settings);
  result.out_dir = get<std::string>(result.settings, "/out");
  std::error_code ec;
  fs::create_directories(result.out_dir, ec);
  if (ec || !fs::is_directory(result.out_dir)) {
    throw ConfigError("cannot create output directory " + result.out_dir.string());
  }
  Output out(result.out_dir, &result.artifacts);
  out.json("config.json", result.settings);
  Context ctx{result.settings, out, result};
  result.summary = runners().at(config.preset)(ctx);
  result.summary["preset"] = config.preset;
  result.summary["exit_code"] = result.exit_code;
  if (result.run) result.summary["training_diverged"] = result.run->diverged;
  out.json("summary.json", result.summary);
  return result;
}

GradCheckReport run_grad_check(std::size_t count, std::uint64_t seed) {
  GradCheckReport report;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    GradCheckCase c;
    c.family = i % 3 == 0 ? "linear" : i % 3 == 1 ? "chandrasekhar" : "vdp";
    c.mode = i % 4 == 3 ? LayerMode::forward_diff : LayerMode::direct;
    c.n = 1 + (i / 3) % 4;
    c.steps = 1 + i % 3;
    R2N2Config cfg;
    cfg.n = c.n;
    cfg.mode = c.mode;
    cfg.epsilon = 1e-3;
    IterateLoss loss;
    for (std::size_t k = 1; k <= c.steps; ++k) loss.weights.push_back(std::pow(4.0, static_cast<double>(k)));
    for (;;) {
      ProblemFunction f;
      Vector x0;
      if (c.family == "linear") {
        LinearProblem p{problems::builtin_matrix(1 + static_cast<int>(rng.below(19))), {}};
        for (std::size_t j = 0; j < p.a.rows(); ++j) p.b.push_back(rng.uniform(-5.0, 5.0));
        f = problems::linear_function(p);
        x0.assign(p.b.size(), 0.0);
        cfg.h = rng.uniform(0.05, 0.3);
      } else if (c.family == "chandrasekhar") {
        f = problems::chandrasekhar_function(problems::make_chandrasekhar(rng.uniform(0.875, 0.935), 5));
        for (std::size_t j = 0; j < 5; ++j) x0.push_back(rng.normal(1.0, 0.2));
        cfg.h = rng.uniform(0.1, 1.0);
      } else {
        f = problems::vdp_function(rng.uniform(1.35, 1.65));
        x0 = {rng.uniform(-4.0, -3.0), rng.uniform(0.0, 2.0)};
        cfg.h = rng.uniform(0.01, 0.1);
        loss.kind = IterateLoss::Kind::target;
        loss.targets.clear();
        for (std::size_t k = 0; k < c.steps; ++k) loss.targets.push_back({rng.uniform(-4.0, -3.0), rng.uniform(0.0, 2.0)});
      }
      const R2N2Parameters params = R2N2Parameters::uniform(c.n, rng.below(UINT64_MAX), -1.0, 1.0);
      try {
        const LossAndGradient lg = grad_rollout_loss(params, cfg, f, x0, loss);
        const ParameterGradient fd = finite_diff_grad(params, cfg, f, x0, loss);
        c.gap = relative_linf_gap(lg.gradient.flatten(), fd.flatten());
        break;
      } catch (const DomainError&) {
        ++report.redraws;
      } catch (const NonFiniteError&) {
        ++report.redraws;
      }
    }
    report.worst_gap = std::max(report.worst_gap, c.gap);
    report.cases.push_back(c);
  }
  return report;
}

}  // namespace r2n2::experiments
