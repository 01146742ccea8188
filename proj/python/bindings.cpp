#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "r2n2/analysis.hpp"
#include "r2n2/autodiff.hpp"
#include "r2n2/baselines.hpp"
#include "r2n2/errors.hpp"
#include "r2n2/experiments.hpp"
#include "r2n2/problems.hpp"
#include "r2n2/serialization.hpp"
#include "r2n2/superstructure.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace r2n2;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  return Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_matrix(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array from_vector(const Vector& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Python dicts travel as JSON text to keep one schema.
py::object to_py(const io::Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
io::Json from_py(const py::object& o) {
  return io::Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

ProblemFunction linear_f(const Array& a, const Vector& b) { return problems::linear_function({to_matrix(a), b}); }

R2N2Config make_config(std::size_t n, double h, const std::string& mode, double epsilon) {
  R2N2Config cfg{n, h, io::layer_mode_from_string(mode), epsilon};
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "R2N2 superstructure: learned iterative solvers and their classical baselines";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

  py::class_<R2N2Config>(m, "Config")
      .def(py::init(&make_config), "n"_a, "h"_a = 1.0, "mode"_a = "direct", "epsilon"_a = 1e-8)
      .def_readwrite("n", &R2N2Config::n)
      .def_readwrite("h", &R2N2Config::h)
      .def_readwrite("epsilon", &R2N2Config::epsilon)
      .def_property_readonly("mode", [](const R2N2Config& c) { return io::to_string(c.mode); });

  py::class_<R2N2Parameters>(m, "Parameters")
      .def_static("zeros", &R2N2Parameters::zeros, "n"_a, "iteration_blocks"_a = 1)
      .def_static("uniform", &R2N2Parameters::uniform, "n"_a, "seed"_a, "lo"_a, "hi"_a,
                  "iteration_blocks"_a = 1)
      .def_readonly("n", &R2N2Parameters::n)
      .def("flatten", &R2N2Parameters::flatten)
      .def("assign", [](R2N2Parameters& p, const Vector& v) { p.assign(v); })
      .def("__len__", &R2N2Parameters::size)
      .def("to_dict", [](const R2N2Parameters& p, const R2N2Config& c) { return to_py(io::params_to_json(p, c)); });

  m.def("builtin_matrix", [](int id) { return from_matrix(problems::builtin_matrix(id)); }, "id"_a);
  m.def("builtin_b_tilde", [] { return from_vector(problems::builtin_b_tilde()); });

  m.def(
      "rollout_linear",
      [](const R2N2Parameters& p, const R2N2Config& c, const Array& a, const Vector& b, std::size_t steps) {
        const RolloutTrace tr = rollout(p, c, linear_f(a, b), Vector(b.size(), 0.0), steps);
        std::vector<Array> xs;
        for (const auto& x : tr.iterates) xs.push_back(from_vector(x));
        return py::dict("iterates"_a = xs, "residual_norms"_a = tr.residual_norms, "diverged"_a = tr.diverged);
      },
      "params"_a, "config"_a, "A"_a, "b"_a, "steps"_a = 1,
      "Roll out on A x = b from x0 = 0.");

  m.def(
      "loss_and_gradient_linear",
      [](const R2N2Parameters& p, const R2N2Config& c, const Array& a, const Vector& b,
         const std::vector<double>& weights) {
        IterateLoss loss;
        loss.weights = weights;
        const auto lg = grad_rollout_loss(p, c, linear_f(a, b), Vector(b.size(), 0.0), loss);
        return py::make_tuple(lg.loss, from_vector(lg.gradient.flatten()));
      },
      "params"_a, "config"_a, "A"_a, "b"_a, "weights"_a,
      "Residual loss sum_k w_k ||A x_k - b||^2 and its gradient, in flatten() order.");

  m.def(
      "finite_diff_gradient_linear",
      [](const R2N2Parameters& p, const R2N2Config& c, const Array& a, const Vector& b,
         const std::vector<double>& weights, double step) {
        IterateLoss loss;
        loss.weights = weights;
        return from_vector(finite_diff_grad(p, c, linear_f(a, b), Vector(b.size(), 0.0), loss, step).flatten());
      },
      "params"_a, "config"_a, "A"_a, "b"_a, "weights"_a, "step"_a = 1e-6);

  m.def(
      "gmres",
      [](const Array& a, const Vector& b, std::size_t n, std::size_t restarts) {
        const auto tr = gmres_restarted(matrix_operator(to_matrix(a)), b, Vector(b.size(), 0.0), n, restarts);
        return py::make_tuple(from_vector(tr.iterates.back()), tr.residual_norms);
      },
      "A"_a, "b"_a, "n"_a, "restarts"_a = 1,
      "Restarted GMRES(n) from zero; returns (x, residual norms per cycle).");

  m.def(
      "nk_gmres_chandrasekhar",
      [](double c, std::size_t size, const Vector& x0, std::size_t n, std::size_t steps) {
        const auto f = problems::chandrasekhar_function(problems::make_chandrasekhar(c, size));
        std::vector<double> norms;
        for (const auto& x : nk_gmres(f, x0, n, steps)) norms.push_back(linalg::norm2(f(x)));
        return norms;
      },
      "c"_a, "m"_a, "x0"_a, "n"_a, "steps"_a, "Residual norms of NK-GMRES on the H-equation.");

  m.def(
      "rk_step_vdp",
      [](std::size_t stages, double a, const Vector& x, double h) {
        return from_vector(rk_step(rk_tableau(stages), problems::vdp_function(a).evaluate, x, h));
      },
      "stages"_a, "a"_a, "x"_a, "h"_a);

  m.def("theta_to_zeta", &theta_to_zeta, "params"_a, "config"_a);
  m.def(
      "certify",
      [](const R2N2Parameters& p, const R2N2Config& c, const Array& a) {
        const auto op = algorithm_operator(p, c, to_matrix(a));
        const auto cert = certify_convergence(op);
        return py::dict("norm"_a = cert.norm, "verdict"_a = to_string(cert.verdict), "zeta"_a = op.zeta);
      },
      "params"_a, "config"_a, "A"_a, "Spectral norm of I + sum_j zeta_j A^j.");

  m.def("preset_names", &experiments::preset_names);
  m.def("preset_defaults", [](const std::string& name) { return to_py(experiments::preset_defaults(name)); });
  m.def(
      "run_preset",
      [](const std::string& name, const py::object& overrides) {
        experiments::ExperimentConfig cfg;
        cfg.preset = name;
        if (!overrides.is_none()) cfg.file = from_py(overrides);
        experiments::PresetResult r;
        {
          py::gil_scoped_release release;
          r = experiments::run_preset(cfg);
        }
        std::vector<std::string> artifacts;
        for (const auto& p : r.artifacts) artifacts.push_back(p.string());
        return py::dict("exit_code"_a = r.exit_code, "summary"_a = to_py(r.summary),
                        "settings"_a = to_py(r.settings), "artifacts"_a = artifacts);
      },
      "name"_a, "overrides"_a = py::none(),
      "Run a preset; overrides use the same schema as a --config file.");
  m.def(
      "grad_check",
      [](std::size_t count, std::uint64_t seed) {
        const auto rep = experiments::run_grad_check(count, seed);
        return py::make_tuple(rep.worst_gap, rep.cases.size(), rep.redraws);
      },
      "count"_a = 100, "seed"_a = 0);
}
