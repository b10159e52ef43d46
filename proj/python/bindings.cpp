#include "blockcov/config.hpp"
#include "blockcov/errors.hpp"
#include "blockcov/estimators.hpp"
#include "blockcov/evaluation.hpp"
#include "blockcov/rng.hpp"
#include "blockcov/simulation.hpp"
#include "blockcov/thresholding.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace blockcov;

namespace {

EstimatorConfig estimator_from(const std::string& config_json) {
  if (config_json.empty()) return RunConfig{}.estimator;
  return RunConfig::from_json(nlohmann::json::parse(config_json)).estimator;
}

py::dict estimate_py(const Matrix& values, const std::string& method, std::optional<Index> K,
                     std::optional<std::uint64_t> seed, std::optional<std::vector<std::string>> classes,
                     const std::string& config_json) {
  EstimatorConfig cfg = estimator_from(config_json);
  if (K) cfg.factors.fixed_K = *K;
  if (seed) cfg.kmeans.seed = *seed;
  const ReturnPanel panel = ReturnPanel::from_matrix(values);
  ClassificationMap map;
  if (classes) {
    if (classes->size() != panel.assets.size()) throw ConfigError("classes needs one code per asset");
    for (std::size_t i = 0; i < classes->size(); ++i) map[panel.assets[i]] = (*classes)[i];
  }
  CovarianceEstimate est;
  {
    py::gil_scoped_release release;
    est = estimate(panel, method_from_string(method), cfg, classes ? &map : nullptr);
  }
  py::dict out;
  out["method"] = to_string(est.method);
  out["K"] = est.K;
  out["sigma"] = est.sigma;
  out["psi"] = est.psi;
  out["common"] = est.common;
  out["labels"] = est.assignment.labels;
  out["min_eigenvalue"] = est.min_eigenvalue;
  out["hyperparameters_json"] = est.hyperparameters.dump();
  return out;
}

std::string simulate_py(const std::string& config_json, std::uint64_t seed, int threads) {
  RunConfig cfg = config_json.empty() ? RunConfig{} : RunConfig::from_json(nlohmann::json::parse(config_json));
  cfg.validate();
  StudyOptions o;
  o.spec = cfg.simulation;
  o.spec.seed = seed;
  o.methods = cfg.methods;
  o.estimator = cfg.estimator;
  o.use_true_K = cfg.use_true_K;
  o.reference = cfg.reference;
  o.nonzero_tol = cfg.nonzero_tol;
  o.threads = threads;
  py::gil_scoped_release release;
  return run_simulation_study(o).to_json().dump();
}

py::dict sample_model_py(Index p, Index T, Index K, const std::string& structure, Index M, std::uint64_t seed) {
  SimulationSpec spec;
  spec.p = p;
  spec.T = T;
  spec.K = K;
  spec.M = M;
  spec.structure = structure == "partial" ? BlockStructure::Partial : BlockStructure::Full;
  const PopulationModel model = generate_model(spec, seed);
  const ReturnPanel panel = sample_panel(model, T, spec.df, derive_seed(seed, {2}));
  py::dict out;
  out["returns"] = panel.values;
  out["sigma"] = model.sigma;
  out["psi"] = model.psi;
  out["labels"] = model.true_labels.labels;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Factor-model covariance estimators with block-diagonal idiosyncratic covariance";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("estimate", &estimate_py, py::arg("returns"), py::arg("method"), py::arg("K") = std::nullopt,
        py::arg("seed") = std::nullopt, py::arg("classes") = std::nullopt, py::arg("config_json") = "",
        "Estimate a p x p covariance from a p x T return matrix.");
  m.def("simulate", &simulate_py, py::arg("config_json"), py::arg("seed"), py::arg("threads") = 1,
        "Run a simulation study; returns the report as JSON text.");
  m.def("sample_model", &sample_model_py, py::arg("p"), py::arg("T"), py::arg("K") = 5,
        py::arg("structure") = "full", py::arg("M") = 10, py::arg("seed") = 0);
  m.def("rand_index", &rand_index);
  m.def("paired_sign_test", &paired_sign_test);
  m.def("gmv_weights", &gmv_weights);
  m.def("portfolio_risk", &portfolio_risk, py::arg("w"), py::arg("sigma"), py::arg("annualize") = false);
  m.def(
      "threshold",
      [](const std::string& kind, double z, double tau, double a) {
        ThresholdRule r;
        if (kind == "HARD") r = ThresholdRule::hard();
        else if (kind == "SOFT") r = ThresholdRule::soft();
        else if (kind == "AL") r = ThresholdRule::adaptive_lasso(0, a);
        else if (kind == "SCAD") r = ThresholdRule::scad(0, a);
        else throw ConfigError("unknown operator '" + kind + "'");
        r.validate();
        return apply_operator(r, z, tau);
      },
      py::arg("kind"), py::arg("z"), py::arg("tau"), py::arg("a") = 3.7);
}
