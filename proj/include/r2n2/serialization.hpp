#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "r2n2/problems.hpp"
#include "r2n2/superstructure.hpp"
#include "r2n2/training.hpp"

namespace r2n2::io {

using Json = nlohmann::json;

std::string to_string(LayerMode mode);
LayerMode layer_mode_from_string(const std::string& name);

/// {n, h, layer_mode, epsilon, theta_layers, theta_out, per_iteration?, share_layers}.
/// theta_layers/theta_out hold block 0; per_iteration lists every block when
/// there is more than one.
Json params_to_json(const R2N2Parameters& params, const R2N2Config& cfg);

struct StoredParameters {
  R2N2Parameters params;
  R2N2Config config;
};

/// Throws ConfigError on missing fields or shape violations.
StoredParameters params_from_json(const Json& j);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json instance_to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const Json& j);

/// {generator_tag, seed, params, instances, split, targets?}
Json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const Json& j);

Json loss_spec_to_json(const LossSpec& spec);

/// Manifest of a training run (history goes to the CSV).
Json run_manifest(const TrainingRun& run, const R2N2Config& cfg, const LossSpec& spec);

/// epoch,train_loss,test_loss; unevaluated test losses are left empty.
void write_loss_csv(const std::filesystem::path& path, const TrainingRun& run);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace r2n2::io
