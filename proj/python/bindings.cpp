#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "rmlab/data.hpp"
#include "rmlab/error.hpp"
#include "rmlab/experiment.hpp"
#include "rmlab/noise.hpp"
#include "rmlab/numerics.hpp"
#include "rmlab/rml.hpp"
#include "rmlab/verify.hpp"

namespace py = pybind11;
using namespace rmlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InvalidInput("features must be a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::memcpy(m.data().data(), a.data(), sizeof(double) * m.data().size());
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  std::memcpy(a.mutable_data(), m.data().data(), sizeof(double) * m.data().size());
  return a;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict d;
  d["features"] = to_array(ds.features());
  d["observed_labels"] = ds.observed_labels();
  if (ds.has_true_labels()) d["true_labels"] = ds.true_labels();
  d["num_classes"] = ds.num_classes();
  return d;
}

// Commands take and return JSON text; the Python side handles dicts.
std::pair<int, std::string> run_command(const std::string& command, const std::string& config_json,
                                        const std::string& suite) {
  const ExperimentConfig config = parse_config(nlohmann::json::parse(config_json));
  CommandResult r;
  if (command == "inject") {
    r = cmd_inject(config);
  } else if (command == "train") {
    r = cmd_train(config);
  } else if (command == "verify") {
    r = cmd_verify(config, suite);
  } else if (command == "ablate") {
    r = cmd_ablate(config);
  } else {
    throw InvalidInput("unknown command '" + command + "'");
  }
  return {r.exit_code, r.report.dump()};
}

py::dict report_dict(const verify::Report& r) {
  py::dict d;
  d["check"] = r.check;
  d["trials"] = r.trials;
  d["statistic"] = r.statistic;
  d["bound"] = r.bound;
  d["passed"] = r.pass;
  d["status"] = r.status;
  py::dict details;
  for (const auto& [k, v] : r.details) details[py::str(k)] = v;
  d["details"] = details;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rmlab, m) {
  m.doc() = "Regroup median loss estimation for noisy-label training";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ConsistencyError>(m, "ConsistencyError", base.ptr());
  py::register_exception<Unavailable>(m, "Unavailable", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericalFailure>(m, "NumericalFailure", base.ptr());

  m.def("softmax", [](std::vector<double> v) { return softmax(v); }, py::arg("logits"));
  m.def("median", [](std::vector<double> v) { return median_of(v); }, py::arg("values"));

  m.def(
      "selection_probabilities",
      [](std::vector<double> losses, double epsilon_bias) {
        return selection_probabilities(losses, epsilon_bias).probabilities;
      },
      py::arg("losses"), py::arg("epsilon_bias") = 1.0, "softmax(-l (l + eps)) within one class");
  m.def(
      "plain_selection_probabilities", [](std::vector<double> losses) { return plain_selection_probabilities(losses); },
      py::arg("losses"));
  m.def(
      "probability_shift",
      [](std::vector<double> losses, double epsilon_bias) {
        const ProbabilityShift s = probability_shift(losses, epsilon_bias);
        return std::make_pair(s.shift, s.beta);
      },
      py::arg("losses"), py::arg("epsilon_bias") = 1.0, "(log p - log p~, beta)");
  m.def(
      "regroup_median",
      [](double sample_loss, std::vector<double> selected, std::size_t n, std::size_t k, std::uint64_t seed) {
        RngStream rng(seed, streams::kRegroup);
        return regroup_median(sample_loss, selected, {n, k, 1.0}, rng).estimate;
      },
      py::arg("sample_loss"), py::arg("selected_losses"), py::arg("n"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "make_blobs",
      [](std::size_t num_classes, std::size_t per_class, std::size_t dim, double separation, std::uint64_t seed) {
        return dataset_dict(make_blobs(num_classes, per_class, dim, separation, RngStream(seed, streams::kData)));
      },
      py::arg("num_classes"), py::arg("per_class"), py::arg("dim"), py::arg("separation"), py::arg("seed") = 0);
  m.def(
      "inject",
      [](const Array& features, Labels labels, std::size_t num_classes, const std::string& kind, double rate,
         std::uint64_t seed) {
        const Dataset clean(to_matrix(features), labels, labels, num_classes);
        return dataset_dict(inject(clean, {parse_noise_kind(kind), rate}, seed));
      },
      py::arg("features"), py::arg("labels"), py::arg("num_classes"), py::arg("kind"), py::arg("rate"),
      py::arg("seed") = 0, "Corrupts `labels`; returns the dataset with true and observed labels.");
  m.def(
      "read_idx",
      [](const std::string& images, const std::string& labels) { return dataset_dict(read_idx(images, labels)); },
      py::arg("images"), py::arg("labels"));

  m.def(
      "check_prop1",
      [](std::size_t trials, std::size_t m, std::uint64_t seed) {
        return report_dict(verify::check_prop1(trials, m, RngStream(seed, streams::kVerify)));
      },
      py::arg("trials") = 1000, py::arg("m") = 100, py::arg("seed") = 0);
  m.def(
      "prop2_bound", [](std::size_t n, std::size_t k, double variance, double epsilon_r) {
        return verify::prop2_bound(n, k, variance, epsilon_r);
      },
      py::arg("n"), py::arg("k"), py::arg("variance"), py::arg("epsilon_r"));

  m.def("run_command", &run_command, py::arg("command"), py::arg("config_json"), py::arg("suite") = "all",
        "Runs inject | train | verify | ablate on a JSON config; returns (exit_code, report_json).");
}
