#pragma once

#include "blockcov/block_shrinkage.hpp"
#include "blockcov/clustering.hpp"
#include "blockcov/factor_core.hpp"
#include "blockcov/panel_io.hpp"
#include "blockcov/thresholding.hpp"

#include <optional>
#include <string>
#include <vector>

namespace blockcov {

/// Settings of every idiosyncratic estimator.
struct EstimatorConfig {
  FactorOptions factors;

  // Thresholding: tau is chosen on a log grid by cross-validation.
  double tau_min = 0.05;
  double tau_max = 5.0;
  int tau_count = 30;
  double al_exponent = 3.0;
  double scad_a = 3.7;
  CvOptions threshold_cv;

  // Clustering.
  Linkage linkage = Linkage::Average;
  KMeansOptions kmeans;
  int max_clusters = 0;
  CvOptions csk_cv;
  CvOptions csh_cv{10, 2.0 / 3.0, 50, 0.0};

  ShrinkageOptions shrinkage;

  /// Throws ConfigError on an invalid setting.
  void validate() const;
};

struct CovarianceEstimate {
  Method method = Method::DIAG;
  Index K = 0;
  Matrix sigma;
  Matrix psi;
  Matrix common;
  /// Method-specific record: tau, cluster count, cut-off, linkage, alphas.
  nlohmann::json hyperparameters = nlohmann::json::object();
  /// Cluster labels for the block methods and DIAG; support components of
  /// psi for the thresholding methods.
  ClusterAssignment assignment;
  double min_eigenvalue = 0.0;     // of sigma
  double psi_min_eigenvalue = 0.0;

  /// Report with the scalar summary; matrices are included on request.
  Report to_report(bool include_matrices) const;
};

/// Connected components of the off-diagonal support |psi_ij| > tol.
ClusterAssignment support_components(const Matrix& psi, double tol = 0.0);

/// Second step on an existing factor fit. `assets` and `classes` are only
/// used by CSI, which throws ConfigError when `classes` is null.
CovarianceEstimate estimate_from_fit(const FactorFit& fit, Method method, const EstimatorConfig& config,
                                     const std::vector<std::string>* assets = nullptr,
                                     const ClassificationMap* classes = nullptr);

/// Both steps on a panel.
CovarianceEstimate estimate(const ReturnPanel& panel, Method method, const EstimatorConfig& config,
                            const ClassificationMap* classes = nullptr);

struct Comparison {
  FactorFit fit;
  std::vector<Method> methods;
  /// One entry per method, empty when that method failed.
  std::vector<std::optional<CovarianceEstimate>> estimates;
  std::vector<std::string> errors;  // empty string on success

  Report to_report(bool include_matrices) const;
};

/// Runs every method on one shared factor fit. A failing method does not
/// stop its siblings; its error message is kept instead.
Comparison compare(const ReturnPanel& panel, const std::vector<Method>& methods,
                   const EstimatorConfig& config, const ClassificationMap* classes = nullptr,
                   int threads = 1);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace blockcov
