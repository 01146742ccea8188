#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "r2n2/analysis.hpp"
#include "r2n2/errors.hpp"
#include "r2n2/experiments.hpp"
#include "r2n2/plot.hpp"
#include "r2n2/problems.hpp"
#include "r2n2/serialization.hpp"

namespace {

constexpr int kExitDiverged = 2;
constexpr int kExitConfig = 3;

using namespace r2n2;

int run_command(const experiments::ExperimentConfig& base, const std::string& config_path) {
  experiments::ExperimentConfig config = base;
  if (!config_path.empty()) config.file = io::read_json_file(config_path);
  const auto result = experiments::run_preset(config);
  std::cout << result.summary.dump(2) << '\n';
  for (const auto& a : result.artifacts) std::cerr << "wrote " << a.string() << '\n';
  if (result.exit_code == kExitDiverged) {
    std::cerr << "training diverged: " << (result.run ? result.run->divergence_reason : "") << '\n';
  }
  return result.exit_code;
}

int certify_command(const std::string& params_path, const std::string& matrix) {
  const io::StoredParameters stored = io::params_from_json(io::read_json_file(params_path));
  const Matrix a = problems::builtin_matrix(problems::parse_matrix_id(matrix));
  const AlgorithmOperator op = algorithm_operator(stored.params, stored.config, a);
  const Certification c = certify_convergence(op);
  io::Json out{{"matrix", matrix}, {"norm", c.norm}, {"verdict", to_string(c.verdict)}, {"zeta", op.zeta}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int grad_check_command(std::size_t count, std::uint64_t seed, double tolerance) {
  const auto report = experiments::run_grad_check(count, seed);
  std::size_t failures = 0;
  for (const auto& c : report.cases) {
    const bool ok = c.gap < tolerance;
    failures += ok ? 0 : 1;
    std::printf("%-14s %-12s n=%zu T=%zu gap=%.3e %s\n", c.family.c_str(), io::to_string(c.mode).c_str(),
                c.n, c.steps, c.gap, ok ? "ok" : "FAIL");
  }
  std::printf("%zu/%zu within %.0e (worst %.3e, %zu redraws)\n", report.cases.size() - failures,
              report.cases.size(), tolerance, report.worst_gap, report.redraws);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and benchmark R2N2 iterative solvers"};
  app.require_subcommand(1);

  experiments::ExperimentConfig run_cfg;
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, threads = 0;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run a named experiment preset");
  run->add_option("preset", run_cfg.preset, "Preset name")->required();
  run->add_option("--config", config_path, "JSON settings file")->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "Training seed");
  auto* out_opt = run->add_option("--out", out_dir, "Output directory");
  auto* epochs_opt = run->add_option("--epochs", epochs, "Training epochs");
  auto* threads_opt = run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string params_path, matrix;
  auto* certify = app.add_subcommand("certify", "Spectral-norm convergence certificate on a builtin matrix");
  certify->add_option("--params", params_path, "params.json written by a run")->required()->check(CLI::ExistingFile);
  certify->add_option("--matrix", matrix, "A1..A19")->required();

  std::size_t gc_count = 100;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-5;
  auto* grad_check = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  grad_check->add_option("--count", gc_count, "Random configurations");
  grad_check->add_option("--seed", gc_seed, "Seed of the configuration draw");
  grad_check->add_option("--tolerance", gc_tol, "Relative l-inf bound");

  std::string csv_path, svg_path, kind, title;
  double guide = 0.0;
  auto* plot_cmd = app.add_subcommand("plot", "Render a CSV produced by a preset as SVG");
  plot_cmd->add_option("csv", csv_path)->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--kind", kind, "scatter-ratio | convergence-lines | error-vs-h")->required();
  plot_cmd->add_option("--out", svg_path, "SVG path")->required();
  plot_cmd->add_option("--title", title);
  auto* guide_opt = plot_cmd->add_option("--guide-slope", guide, "error-vs-h reference slope");

  app.add_subcommand("presets", "List preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      if (*seed_opt) run_cfg.seed = seed;
      if (*epochs_opt) run_cfg.epochs = epochs;
      if (*threads_opt) run_cfg.threads = threads;
      if (*out_opt) run_cfg.out_dir = out_dir;
      return run_command(run_cfg, config_path);
    }
    if (*certify) return certify_command(params_path, matrix);
    if (*grad_check) return grad_check_command(gc_count, gc_seed, gc_tol);
    if (*plot_cmd) {
      plot::PlotOptions opts{title, std::nullopt};
      if (*guide_opt) opts.guide_slope = guide;
      plot::emit_plot(csv_path, plot::kind_from_string(kind), svg_path, opts);
      return 0;
    }
    for (const auto& name : experiments::preset_names()) std::cout << name << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}
