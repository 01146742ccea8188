#include "r2n2/serialization.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <variant>

#include "r2n2/errors.hpp"

namespace r2n2::io {

std::string to_string(LayerMode mode) {
  return mode == LayerMode::direct ? "direct" : "forward_diff";
}

LayerMode layer_mode_from_string(const std::string& name) {
  if (name == "direct") return LayerMode::direct;
  if (name == "forward_diff") return LayerMode::forward_diff;
  throw ConfigError("unknown layer_mode '" + name + "'");
}

namespace {

Json block_to_json(const ParameterBlock& b) {
  return Json{{"theta_layers", b.layers}, {"theta_out", b.out}};
}

ParameterBlock block_from_json(const Json& j) {
  ParameterBlock b;
  b.layers = j.at("theta_layers").get<std::vector<std::vector<double>>>();
  b.out = j.at("theta_out").get<std::vector<double>>();
  return b;
}

template <class T>
T field(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

Json params_to_json(const R2N2Parameters& params, const R2N2Config& cfg) {
  Json j{{"n", params.n},
         {"h", cfg.h},
         {"layer_mode", to_string(cfg.mode)},
         {"epsilon", cfg.epsilon},
         {"theta_layers", params.blocks.front().layers},
         {"theta_out", params.blocks.front().out},
         {"share_layers", params.share_layers}};
  if (params.per_iteration()) {
    Json blocks = Json::array();
    for (const auto& b : params.blocks) blocks.push_back(block_to_json(b));
    j["per_iteration"] = std::move(blocks);
  }
  return j;
}

StoredParameters params_from_json(const Json& j) {
  StoredParameters s;
  try {
    s.config.n = field<std::size_t>(j, "n");
    s.config.h = j.value("h", 1.0);
    s.config.mode = layer_mode_from_string(j.value("layer_mode", std::string("direct")));
    s.config.epsilon = j.value("epsilon", 1e-8);
    s.params.n = s.config.n;
    s.params.share_layers = j.value("share_layers", false);
    if (j.contains("per_iteration")) {
      for (const auto& b : j.at("per_iteration")) s.params.blocks.push_back(block_from_json(b));
    } else {
      s.params.blocks.push_back(block_from_json(j));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("parameter file: ") + e.what());
  }
  s.config.validate();
  s.params.validate();
  return s;
}

Json matrix_to_json(const Matrix& m) {
  return Json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const Json& j) {
  return Matrix(field<std::size_t>(j, "rows"), field<std::size_t>(j, "cols"),
                field<std::vector<double>>(j, "data"));
}

Json instance_to_json(const ProblemInstance& inst) {
  return std::visit(
      [](const auto& p) -> Json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearProblem>) {
          return Json{{"type", "linear"}, {"A", matrix_to_json(p.a)}, {"b", p.b}};
        } else if constexpr (std::is_same_v<T, NonlinearInstance>) {
          return Json{{"type", "chandrasekhar"}, {"c", p.problem.c}, {"m", p.problem.m},
                      {"x0", p.x0}};
        } else {
          return Json{{"type", "vdp"}, {"a", p.a}, {"x0", p.x0}, {"h", p.h}, {"t0", p.t0}};
        }
      },
      inst);
}

ProblemInstance instance_from_json(const Json& j) {
  const std::string type = field<std::string>(j, "type");
  if (type == "linear") {
    return LinearProblem{matrix_from_json(j.at("A")), field<Vector>(j, "b")};
  }
  if (type == "chandrasekhar") {
    return NonlinearInstance{
        problems::make_chandrasekhar(field<double>(j, "c"), field<std::size_t>(j, "m")),
        field<Vector>(j, "x0")};
  }
  if (type == "vdp") {
    return IVPProblem{field<double>(j, "a"), field<Vector>(j, "x0"), field<double>(j, "h"),
                      j.value("t0", 0.0)};
  }
  throw ConfigError("unknown instance type '" + type + "'");
}

Json dataset_to_json(const Dataset& ds) {
  Json inst = Json::array();
  for (const auto& i : ds.instances) inst.push_back(instance_to_json(i));
  Json j{{"generator_tag", ds.generator_tag},
         {"seed", ds.seed},
         {"params", Json::parse(ds.params_json.empty() ? "{}" : ds.params_json)},
         {"instances", std::move(inst)},
         {"split", {{"train", ds.train}, {"test", ds.test}}}};
  if (!ds.targets.empty()) j["targets"] = ds.targets;
  return j;
}

Dataset dataset_from_json(const Json& j) {
  Dataset ds;
  try {
    ds.generator_tag = field<std::string>(j, "generator_tag");
    ds.seed = field<std::uint64_t>(j, "seed");
    ds.params_json = j.value("params", Json::object()).dump();
    for (const auto& i : j.at("instances")) ds.instances.push_back(instance_from_json(i));
    ds.train = j.at("split").at("train").get<std::vector<std::size_t>>();
    ds.test = j.at("split").at("test").get<std::vector<std::size_t>>();
    if (j.contains("targets")) ds.targets = j.at("targets").get<std::vector<std::vector<Vector>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset file: ") + e.what());
  }
  for (auto idx : ds.train)
    if (idx >= ds.instances.size()) throw ConfigError("dataset file: split index out of range");
  for (auto idx : ds.test)
    if (idx >= ds.instances.size()) throw ConfigError("dataset file: split index out of range");
  return ds;
}

Json loss_spec_to_json(const LossSpec& spec) {
  return Json{{"kind", to_string(spec.kind)},
              {"T", spec.steps},
              {"weighting", spec.weighting == LossSpec::Weighting::power4 ? "4^k" : "uniform"},
              {"weights", spec.iteration_weights()},
              {"order", spec.order},
              {"normalization", "1/N"}};
}

Json run_manifest(const TrainingRun& run, const R2N2Config& cfg, const LossSpec& spec) {
  Json j{{"seed", run.seed},
         {"epochs_requested", run.epochs_requested},
         {"epochs_completed", run.history.size()},
         {"optimizer", {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}}},
         {"loss", loss_spec_to_json(spec)},
         {"diverged", run.diverged},
         {"initial_parameters", params_to_json(run.initial, cfg)},
         {"parameters", params_to_json(run.params, cfg)}};
  if (run.diverged) j["divergence_reason"] = run.divergence_reason;
  if (!run.history.empty()) {
    j["final_train_loss"] = run.history.back().train_loss;
    if (std::isfinite(run.history.back().test_loss)) j["final_test_loss"] = run.history.back().test_loss;
  }
  return j;
}

void write_loss_csv(const std::filesystem::path& path, const TrainingRun& run) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "epoch,train_loss,test_loss\n" << std::setprecision(17);
  for (const auto& r : run.history) {
    out << r.epoch << ',' << r.train_loss << ',';
    if (std::isfinite(r.test_loss)) out << r.test_loss;
    out << '\n';
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace r2n2::io
