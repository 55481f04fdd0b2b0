#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vpnet/experiment.hpp"
#include "vpnet/factorization.hpp"
#include "vpnet/grad.hpp"
#include "vpnet/io.hpp"
#include "vpnet/trainer.hpp"
#include "vpnet/volume.hpp"

namespace py = pybind11;
using namespace vpnet;

namespace {

Matrix stack(const Trajectory& states) {
  if (states.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(states.size()), states.front().size());
  for (std::size_t k = 0; k < states.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = states[k];
  return m;
}

// Rows are samples on the Python side.
Matrix forward_rows(const Network& net, const Matrix& x) {
  return network_forward(net, Matrix(x.transpose())).transpose();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Volume-preserving networks";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NotEmbeddableError>(m, "NotEmbeddableError", PyExc_ValueError);

  py::class_<Network>(m, "Network")
      .def_property_readonly("kind", [](const Network& n) { return std::string(to_string(n.kind)); })
      .def_readonly("dimension", &Network::dimension)
      .def_readonly("width", &Network::width)
      .def_property_readonly("depth", &Network::depth)
      .def_property_readonly("parameter_count",
                             [](const Network& n) { return parameter_count(n); })
      .def_property("parameters",
                    [](const Network& n) { return pack_parameters(n.modules); },
                    [](Network& n, const Vector& p) { unpack_parameters(n.modules, p); })
      .def("forward", [](const Network& n, const Vector& x) { return network_forward(n, x); })
      .def("forward_batch", &forward_rows, "Rows of x are samples")
      .def("inverse", [](const Network& n, const Vector& y) { return network_inverse(n, y); })
      .def("rollout", [](const Network& n, const Vector& x0, std::size_t steps) {
        return stack(rollout(n, x0, steps));
      });

  m.def(
      "build_rvpnet",
      [](int dim, int width, std::uint64_t seed, const std::string& act) {
        std::mt19937_64 rng(seed);
        return build_rvpnet(dim, width, rng, parse_activation(act));
      },
      py::arg("dimension"), py::arg("width") = 64, py::arg("seed") = 0,
      py::arg("activation") = "sigmoid");
  m.def(
      "build_lavpnet",
      [](int dim, const std::string& act) { return build_lavpnet(dim, parse_activation(act)); },
      py::arg("dimension"), py::arg("activation") = "sigmoid");
  m.def(
      "randomize",
      [](Network& net, std::uint64_t seed, double scale) {
        std::mt19937_64 rng(seed);
        randomize_parameters(net, rng, scale);
      },
      py::arg("network"), py::arg("seed") = 0, py::arg("scale") = 0.5);

  m.def(
      "check_volume",
      [](const Network& net, std::size_t points, double tol, double step, std::uint64_t seed) {
        const auto r = check_volume(net, {.points = points, .tol = tol, .step = step, .seed = seed});
        py::dict d;
        d["max_deviation"] = r.max_deviation;
        d["worst_point"] = r.worst_point;
        d["points"] = r.points;
        d["passed"] = r.passed;
        return d;
      },
      py::arg("network"), py::arg("points") = 1000, py::arg("tol") = 1e-6,
      py::arg("step") = 1e-5, py::arg("seed") = 0);

  m.def(
      "gradcheck",
      [](const Network& net, const Vector& x, double step, double tol) {
        const auto r = gradcheck(net, x, step, tol);
        py::dict d;
        d["max_error"] = r.max_error;
        d["input_max_error"] = r.input_max_error;
        d["module_max_error"] = r.module_max_error;
        d["parameters_checked"] = r.parameters_checked;
        d["passed"] = r.passed;
        return d;
      },
      py::arg("network"), py::arg("x"), py::arg("step") = 1e-6, py::arg("tol") = 1e-5);

  m.def(
      "make_dataset",
      [](const std::string& system, std::size_t substeps) {
        DatasetOptions opts;
        opts.substeps = substeps;
        const auto ds = make_dataset(parse_system(system), opts);
        return py::make_tuple(Matrix(ds.inputs.transpose()), Matrix(ds.targets.transpose()),
                              ds.time_step);
      },
      py::arg("system"), py::arg("substeps") = 500);

  m.def(
      "train",
      [](const Network& net, const Matrix& inputs, const Matrix& targets, double lr, double decay,
         long epochs, long log_interval) {
        TrajectoryDataset ds;
        ds.inputs = inputs.transpose();
        ds.targets = targets.transpose();
        ds.time_step = 1.0;
        TrainingResult result;
        {
          py::gil_scoped_release release;
          result = train(net, ds, {lr, decay, epochs, 0, log_interval});
        }
        py::list history;
        for (const auto& r : result.history) {
          history.append(py::make_tuple(r.epoch, r.loss, r.learning_rate));
        }
        return py::make_tuple(result.state.network, result.final_loss, history);
      },
      py::arg("network"), py::arg("inputs"), py::arg("targets"), py::arg("lr") = 0.01,
      py::arg("decay") = 1000.0, py::arg("epochs") = 1000, py::arg("log_interval") = 100,
      "Full-batch Adam; rows of inputs/targets are samples. Returns (network, final_loss, history).");

  m.def(
      "reference_trajectory",
      [](const std::string& system, const Vector& x0, double data_step, std::size_t steps,
         std::size_t substeps) {
        return stack(reference_trajectory(parse_system(system), x0, data_step, steps, substeps));
      },
      py::arg("system"), py::arg("x0"), py::arg("data_step"), py::arg("steps"),
      py::arg("substeps") = 500);

  m.def(
      "factor_volume_preserving",
      [](const Matrix& a, const Vector& bias, double eps) {
        const auto lin = factor_volume_preserving(a, bias, eps);
        std::vector<Matrix> factors;
        for (const auto& s : lin.factors) factors.push_back(assemble(s));
        return py::make_tuple(factors, assemble(lin));
      },
      py::arg("matrix"), py::arg("bias"), py::arg("eps") = 1e-10,
      "Returns (dense factors in product order, assembled product).");

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& p) { return load_checkpoint(p).state.network; },
      py::arg("path"));
  m.def(
      "save_network",
      [](const std::filesystem::path& p, const Network& net) {
        Checkpoint c;
        c.state = initial_state(net);
        save_checkpoint(p, c);
      },
      py::arg("path"), py::arg("network"));

  m.def("planar_energy", &planar_energy, py::arg("state"));
  m.def("volterra_sum", &volterra_sum, py::arg("state"));
  m.def("volterra_product", &volterra_product, py::arg("state"));
  m.def("preset_state", &preset_state, py::arg("name"));
  m.def("preset_names", &preset_names);
}
