#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "r2n2/serialization.hpp"
#include "r2n2/training.hpp"

namespace r2n2::experiments {

/// What the caller asked for. Flags (the optional fields) override values in
/// `file`, which override the preset defaults.
struct ExperimentConfig {
  std::string preset;
  io::Json file = io::Json::object();
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> threads;
  std::optional<std::filesystem::path> out_dir;
};

struct PresetResult {
  std::string preset;
  int exit_code = 0;  ///< 0 ok, 2 training flagged as divergent
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> artifacts;
  io::Json settings;  ///< fully resolved configuration
  io::Json summary;   ///< headline metrics, also written to summary.json
  R2N2Config cfg;
  std::optional<TrainingRun> run;  ///< last training run of the preset
  Dataset dataset;
};

std::vector<std::string> preset_names();

/// Default settings of a preset; throws ConfigError for unknown names.
io::Json preset_defaults(const std::string& name);

/// Defaults merged with the file and the flags.
io::Json resolve_settings(const ExperimentConfig& config);

/// Generate, train, evaluate and write artifacts. Throws ConfigError on bad
/// configuration.
PresetResult run_preset(const ExperimentConfig& config);

struct GradCheckCase {
  std::string family;  ///< "linear", "chandrasekhar" or "vdp"
  LayerMode mode = LayerMode::direct;
  std::size_t n = 0;
  std::size_t steps = 0;
  double gap = 0.0;  ///< relative_linf_gap(analytic, central differences)
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double worst_gap = 0.0;
  std::size_t redraws = 0;  ///< draws rejected for hitting a pole
};

/// Analytic against central-difference gradients on `count` random
/// configurations cycling through the three problem families, both layer
/// modes and T = 1..3, with theta ~ U(-1, 1).
GradCheckReport run_grad_check(std::size_t count = 100, std::uint64_t seed = 0);

}  // namespace r2n2::experiments
