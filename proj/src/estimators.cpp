#include "blockcov/estimators.hpp"

#include "blockcov/errors.hpp"
#include "blockcov/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <numeric>

namespace blockcov {

namespace {

double smallest_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return solver.eigenvalues()(0);
}

ThresholdRule rule_for(Method m, const EstimatorConfig& config) {
  switch (m) {
    case Method::HARD: return ThresholdRule::hard();
    case Method::SOFT: return ThresholdRule::soft();
    case Method::AL: return ThresholdRule::adaptive_lasso(0.0, config.al_exponent);
    case Method::SCAD: return ThresholdRule::scad(0.0, config.scad_a);
    default: throw ConfigError("not a thresholding method: " + to_string(m));
  }
}

int find(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

}  // namespace

void EstimatorConfig::validate() const {
  if (!(tau_min > 0.0 && tau_max >= tau_min)) throw ConfigError("tau grid needs 0 < tau_min <= tau_max");
  if (tau_count < 1) throw ConfigError("tau_count must be positive");
  ThresholdRule::adaptive_lasso(0.0, al_exponent).validate();
  ThresholdRule::scad(0.0, scad_a).validate();
  threshold_cv.validate();
  csk_cv.validate();
  csh_cv.validate();
  if (kmeans.restarts < 1 || kmeans.max_iter < 1) throw ConfigError("k-means restarts and max_iter must be positive");
  if (max_clusters < 0) throw ConfigError("max_clusters must be nonnegative");
  if (!(shrinkage.pd_floor > 0.0 && shrinkage.pd_floor <= 1.0)) throw ConfigError("pd_floor must lie in (0, 1]");
  if (factors.fixed_K && *factors.fixed_K < 0) throw ConfigError("K must be nonnegative");
  if (factors.max_K && *factors.max_K < 1) throw ConfigError("max_K must be positive");
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("matrix: expected an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw DataError("matrix: ragged rows");
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

ClusterAssignment support_components(const Matrix& psi, double tol) {
  const auto p = static_cast<int>(psi.rows());
  std::vector<int> parent(static_cast<std::size_t>(p));
  std::iota(parent.begin(), parent.end(), 0);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < j; ++i) {
      if (std::abs(psi(i, j)) > tol) parent[static_cast<std::size_t>(find(parent, i))] = find(parent, j);
    }
  }
  std::vector<int> raw(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) raw[static_cast<std::size_t>(i)] = find(parent, i);
  return ClusterAssignment::from_labels(raw);
}

CovarianceEstimate estimate_from_fit(const FactorFit& fit, Method method, const EstimatorConfig& config,
                                     const std::vector<std::string>* assets,
                                     const ClassificationMap* classes) {
  config.validate();
  CovarianceEstimate est;
  est.method = method;
  est.K = fit.K;
  est.common = fit.common;
  const Matrix& S = fit.ortho_complement;
  const auto p = static_cast<std::size_t>(fit.p);
  auto& hp = est.hyperparameters;
  hp["K"] = fit.K;

  auto block_estimate = [&](const ClusterAssignment& a) {
    IdiosyncraticEstimate ie = estimate_block_psi(S, fit.residuals, a, config.shrinkage);
    nlohmann::json alphas = nlohmann::json::array();
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto& b : ie.blocks) {
      alphas.push_back(b.alpha);
      sizes.push_back(b.members.size());
    }
    hp["alpha"] = alphas;
    hp["block_sizes"] = sizes;
    hp["num_clusters"] = a.num_clusters;
    hp["pd_floor"] = config.shrinkage.pd_floor;
    hp["paper_literal"] = config.shrinkage.lw.literal;
    est.psi = std::move(ie.psi);
    est.psi_min_eigenvalue = ie.min_eigenvalue;
    est.assignment = a;
  };

  switch (method) {
    case Method::DIAG:
      block_estimate(ClusterAssignment::singletons(p));
      break;
    case Method::CSI: {
      if (classes == nullptr || assets == nullptr) {
        throw ConfigError("CSI needs a classification file");
      }
      block_estimate(assignment_from_classification(*classes, *assets));
      break;
    }
    case Method::CSH:
    case Method::CSK: {
      HyperparameterOptions opts;
      opts.method = method == Method::CSH ? ClusterMethod::Hierarchical : ClusterMethod::KMeans;
      opts.linkage = config.linkage;
      opts.cv = method == Method::CSH ? config.csh_cv : config.csk_cv;
      opts.kmeans = config.kmeans;
      opts.max_clusters = config.max_clusters;
      const HyperparameterSelection sel = select_hyperparameter(fit.residuals, S, opts);
      block_estimate(sel.assignment);
      if (method == Method::CSH) {
        hp["linkage"] = to_string(config.linkage);
        hp["cutoff"] = sel.phi;
      } else {
        hp["M"] = static_cast<int>(sel.phi);
        hp["kmeans_seed"] = config.kmeans.seed;
      }
      hp["grid_evaluated"] = sel.evaluated;
      hp["stopped_early"] = sel.stopped_early;
      hp["cv_error"] = sel.cv_error;
      break;
    }
    case Method::SOFT:
    case Method::AL:
    case Method::SCAD:
    case Method::HARD: {
      const ThresholdRule rule = rule_for(method, config);
      const TauSelection sel = select_tau(fit.residuals, S, rule,
                                         log_grid(config.tau_min, config.tau_max, config.tau_count),
                                         config.threshold_cv);
      est.psi = sel.psi;
      est.assignment = support_components(est.psi);
      if (sel.diagonal_fallback) {
        hp["tau"] = nullptr;
      } else {
        hp["tau"] = sel.tau;
      }
      hp["diagonal_fallback"] = sel.diagonal_fallback;
      if (rule.kind == ThresholdKind::AL || rule.kind == ThresholdKind::SCAD) hp["a"] = rule.a;
      hp["cv_error"] = sel.cv_error;
      est.psi_min_eigenvalue = smallest_eigenvalue(est.psi);
      break;
    }
  }

  est.sigma = est.common + est.psi;
  est.min_eigenvalue = smallest_eigenvalue(est.sigma);
  return est;
}

CovarianceEstimate estimate(const ReturnPanel& panel, Method method, const EstimatorConfig& config,
                            const ClassificationMap* classes) {
  panel.validate();
  const FactorFit fit = fit_factors(panel, config.factors);
  return estimate_from_fit(fit, method, config, &panel.assets, classes);
}

Report CovarianceEstimate::to_report(bool include_matrices) const {
  Report r;
  r.tag = to_string(method);
  r.hyperparameters = hyperparameters;
  r.metrics["K"] = static_cast<double>(K);
  r.metrics["min_eigenvalue"] = min_eigenvalue;
  r.metrics["psi_min_eigenvalue"] = psi_min_eigenvalue;
  r.metrics["num_clusters"] = assignment.num_clusters;
  r.data["labels"] = assignment.labels;
  if (include_matrices) {
    r.data["sigma"] = matrix_to_json(sigma);
    r.data["psi"] = matrix_to_json(psi);
  }
  return r;
}

Comparison compare(const ReturnPanel& panel, const std::vector<Method>& methods,
                   const EstimatorConfig& config, const ClassificationMap* classes, int threads) {
  if (methods.empty()) throw ConfigError("compare needs at least one method");
  panel.validate();
  config.validate();
  Comparison out;
  out.fit = fit_factors(panel, config.factors);
  out.methods = methods;
  out.estimates.resize(methods.size());
  out.errors.assign(methods.size(), std::string());
  parallel_for(methods.size(), threads, [&](std::size_t i) {
    try {
      out.estimates[i] = estimate_from_fit(out.fit, methods[i], config, &panel.assets, classes);
    } catch (const std::exception& e) {
      out.errors[i] = e.what();
    }
  });
  return out;
}

Report Comparison::to_report(bool include_matrices) const {
  Report r;
  r.tag = "COMPARE";
  r.metrics["K"] = static_cast<double>(fit.K);
  r.metadata["p"] = fit.p;
  r.metadata["T"] = fit.T;
  r.data["factor_fit"] = fit.to_json();
  nlohmann::json errs = nlohmann::json::object();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (estimates[i]) {
      r.children.push_back(estimates[i]->to_report(include_matrices));
    } else {
      errs[to_string(methods[i])] = errors[i];
    }
  }
  r.data["errors"] = errs;
  return r;
}

}  // namespace blockcov
