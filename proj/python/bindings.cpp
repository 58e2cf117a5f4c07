#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "carefl/cli.hpp"
#include "carefl/datagen.hpp"
#include "carefl/discovery.hpp"
#include "carefl/error.hpp"
#include "carefl/flow.hpp"
#include "carefl/queries.hpp"
#include "carefl/serialize.hpp"
#include "carefl/training.hpp"

namespace py = pybind11;
using json = nlohmann::json;
using namespace carefl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

json parse_config(const std::string& text) {
  json j;
  try {
    j = text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return j;
}

TrainConfig train_config(const json& j) {
  static const std::set<std::string> allowed{"epochs", "batch_size", "lr", "betas", "epsilon",
                                             "scheduler", "split_fraction", "seed", "architecture",
                                             "base", "additive", "standardize", "threshold",
                                             "architectures", "threads"};
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  TrainConfig c;
  train_config_from_json(j, c);
  c.validate();
  return c;
}

DiscoveryConfig discovery_config(const std::string& text) {
  const auto j = parse_config(text);
  DiscoveryConfig d;
  d.train = train_config(j);
  try {
    d.threshold = j.value("threshold", 0.0);
    d.threads = j.value("threads", std::size_t{0});
    for (const auto& a : j.value("architectures", json::array())) {
      d.architectures.push_back(architecture_from_json(a));
    }
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  d.validate();
  return d;
}

struct FitOutput {
  FlowModel model;
  std::string info;
};

FitOutput fit(const Array& data, const std::vector<std::size_t>& sequence, const std::string& config) {
  const auto m = to_matrix(data);
  std::vector<std::size_t> seq = sequence;
  if (seq.empty()) {
    for (std::size_t j = 0; j < m.cols(); ++j) seq.push_back(j);
  }
  auto r = fit_flow(m, CausalOrdering::from_sequence(seq), train_config(parse_config(config)));
  json info = {{"test_loglik", r.test_loglik},
               {"n_train", r.n_train},
               {"n_test", r.n_test},
               {"final_lr", r.final_lr},
               {"plateau_events", r.plateau_events},
               {"train_curve", r.train_curve}};
  return {std::move(r.model), info.dump()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Causal autoregressive flows";

  static py::exception<Error> base(m, "CareflError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", base.ptr());

  py::class_<FlowModel>(m, "FlowModel")
      .def_property_readonly("dim", &FlowModel::dim)
      .def_property_readonly("ordering",
                             [](const FlowModel& f) { return f.ordering().sequence(); })
      .def("to_json", [](const FlowModel& f) { return model_to_json(f); })
      .def_static("from_json", &model_from_json)
      .def("log_likelihood",
           [](const FlowModel& f, std::vector<double> x) { return log_likelihood(f, x); })
      .def("mean_log_likelihood",
           [](const FlowModel& f, const Array& data) { return mean_log_likelihood(f, to_matrix(data)); })
      .def("sample", [](const FlowModel& f, std::size_t n, std::uint64_t seed) {
        return to_array(sample(f, n, seed));
      })
      .def(
          "intervene",
          [](const FlowModel& f, std::size_t target, double value, std::size_t n_samples,
             const std::string& mode, std::uint64_t seed) {
            const auto q = InterventionQuery{target, value, n_samples, parse_mode(mode), seed};
            InterventionResult r;
            {
              py::gil_scoped_release release;
              r = intervene(f, q);
            }
            return py::make_tuple(to_array(r.samples), r.mean, r.std_error);
          },
          py::arg("target"), py::arg("value"), py::arg("n_samples") = 1000,
          py::arg("mode") = "sequential", py::arg("seed") = 0)
      .def(
          "counterfactual",
          [](const FlowModel& f, std::vector<double> x_obs, std::size_t target, double value) {
            return counterfactual(f, {std::move(x_obs), target, value});
          },
          py::arg("x_obs"), py::arg("target"), py::arg("value"));

  m.def(
      "fit",
      [](const Array& data, const std::vector<std::size_t>& ordering, const std::string& config) {
        auto out = fit(data, ordering, config);
        return py::make_tuple(std::move(out.model), out.info);
      },
      py::arg("data"), py::arg("ordering") = std::vector<std::size_t>{}, py::arg("config") = "");

  m.def(
      "likelihood_ratio_bivariate",
      [](const Array& data, const std::string& config) {
        const auto mat = to_matrix(data);
        const auto cfg = discovery_config(config);
        py::gil_scoped_release release;
        return direction_report_to_json(likelihood_ratio_bivariate(mat, cfg)).dump();
      },
      py::arg("data"), py::arg("config") = "");

  m.def(
      "group_direction",
      [](const Array& x1, const Array& x2, const std::string& config) {
        const auto a = to_matrix(x1);
        const auto b = to_matrix(x2);
        const auto cfg = discovery_config(config);
        py::gil_scoped_release release;
        return direction_report_to_json(group_direction(a, b, cfg)).dump();
      },
      py::arg("x1"), py::arg("x2"), py::arg("config") = "");

  m.def(
      "ordering_search",
      [](const Array& data, const std::string& config, std::size_t max_d) {
        const auto mat = to_matrix(data);
        const auto cfg = discovery_config(config);
        py::gil_scoped_release release;
        return ordering_report_to_json(ordering_search(mat, cfg, max_d)).dump();
      },
      py::arg("data"), py::arg("config") = "", py::arg("max_d") = kDefaultMaxOrderingDim);

  m.def(
      "generate",
      [](const std::string& family, std::size_t n, std::uint64_t seed, double coeff,
         const std::string& noise, bool flip) {
        SyntheticSpec s;
        s.family = parse_family(family);
        s.n = n;
        s.seed = seed;
        s.coeff = coeff;
        s.noise = NoiseSpec::parse(noise);
        s.flip_direction = flip;
        const auto ds = generate(s);
        return py::make_tuple(to_array(ds.data), ds.names, truth_json(ds).dump());
      },
      py::arg("family"), py::arg("n") = 500, py::arg("seed") = 0, py::arg("coeff") = 1.0,
      py::arg("noise") = "laplace", py::arg("flip") = false);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
