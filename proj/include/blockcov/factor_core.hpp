#pragma once

#include "blockcov/panel_io.hpp"
#include "blockcov/types.hpp"

#include <optional>
#include <vector>

namespace blockcov {

/// Rows of `values` minus their time means.
Matrix center_rows(const Matrix& values);

/// (T-1)-denominator covariance of the mean-centred rows, symmetrised.
Matrix sample_covariance(const Matrix& values);
inline Matrix sample_covariance(const ReturnPanel& panel) { return sample_covariance(panel.values); }

struct Spectrum {
  Vector eigenvalues;   // nonincreasing
  Matrix eigenvectors;  // column i pairs with eigenvalues[i]
};

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing
/// order (ties keep the solver's index order) and each eigenvector signed so
/// that its largest-magnitude component is positive. Throws DataError for a
/// non-symmetric input.
Spectrum spectral_decompose(const Matrix& cov);

struct ShrunkEigenvalues {
  Vector shrunk;  // leading K entries shrunk, the rest copied unchanged
  double c = 0.0;
};

/// max(lambda - c p / T, 0).
double shrink_eigenvalue(double lambda, double c, Index p, Index T);

/// S-POET bias correction of the K leading eigenvalues with
/// c = (sum of all eigenvalues - sum of the K leading) / (p - K - pK/T).
/// Throws NumericalError when the denominator is not positive.
ShrunkEigenvalues shrink_eigenvalues(const Vector& eigenvalues, Index K, Index p, Index T);

struct FactorCountResult {
  Index K = 0;
  /// IC1 value for every candidate count 0..max_K (entries past a
  /// degenerate count are left as +inf).
  std::vector<double> criterion;
  /// True when the reconstruction error hit zero at K < max_K; K is then
  /// that count.
  bool degenerate = false;
};

/// Bai-Ng IC1: argmin over 0..max_K of
///   log(||Yc - G_K G_K' Yc||_F^2 / (pT)) + K (p+T)/(pT) log(pT/(p+T)),
/// where G_K holds the K leading eigenvectors of the sample covariance.
/// Ties go to the smaller count.
FactorCountResult estimate_num_factors(const Matrix& values, Index max_K);
inline FactorCountResult estimate_num_factors(const ReturnPanel& panel, Index max_K) {
  return estimate_num_factors(panel.values, max_K);
}
/// min(p, T, 30).
Index default_max_factors(Index p, Index T);

/// Yc - G_K G_K' Yc for the mean-centred panel.
Matrix residual_panel(const Matrix& values, const Matrix& eigenvectors, Index K);

/// sample_cov - sum_{i<K} shrunk_i g_i g_i', symmetrised.
Matrix orthogonal_complement(const Matrix& sample_cov, const Vector& shrunk_eigenvalues,
                             const Matrix& eigenvectors, Index K);

/// sum_{i<K} w_i g_i g_i'.
Matrix low_rank_component(const Vector& weights, const Matrix& eigenvectors, Index K);

struct FactorOptions {
  /// Fixed factor count; estimated with Bai-Ng when empty.
  std::optional<Index> fixed_K;
  /// Upper bound for Bai-Ng; default_max_factors when empty.
  std::optional<Index> max_K;  // also capped where the S-POET constant is defined
  /// When false the correction constant c is forced to 0.
  bool spoet = true;
};

/// Everything the idiosyncratic estimators need from the first step.
struct FactorFit {
  Index K = 0;
  Index p = 0;
  Index T = 0;
  Vector eigenvalues;
  Vector shrunk_eigenvalues;
  double c = 0.0;
  Matrix eigenvectors;
  Matrix loadings;          // p x K, sqrt(lambda_i) g_i
  Matrix sample_cov;
  Matrix residuals;         // p x T
  Matrix ortho_complement;  // p x p
  Matrix common;            // sum_{i<K} shrunk_i g_i g_i'
  std::optional<FactorCountResult> factor_count;

  nlohmann::json to_json() const;
};

FactorFit fit_factors(const Matrix& values, const FactorOptions& options);
inline FactorFit fit_factors(const ReturnPanel& panel, const FactorOptions& options) {
  return fit_factors(panel.values, options);
}

}  // namespace blockcov
