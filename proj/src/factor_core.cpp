#include "blockcov/factor_core.hpp"

#include "blockcov/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace blockcov {

Matrix center_rows(const Matrix& values) {
  Vector mean = values.rowwise().mean();
  return values.colwise() - mean;
}

Matrix sample_covariance(const Matrix& values) {
  if (values.cols() < 2) throw DataError("sample_covariance: need at least 2 observations");
  const Matrix centered = center_rows(values);
  Matrix cov = centered * centered.transpose() / static_cast<double>(values.cols() - 1);
  return 0.5 * (cov + cov.transpose());
}

Spectrum spectral_decompose(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw DataError("spectral_decompose: matrix is not square");
  const double scale = std::max(cov.norm(), std::numeric_limits<double>::min());
  if ((cov - cov.transpose()).norm() > 1e-12 * scale) {
    throw DataError("spectral_decompose: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");

  const Index n = cov.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector& ascending = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return ascending(a) > ascending(b); });

  Spectrum s;
  s.eigenvalues.resize(n);
  s.eigenvectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    s.eigenvalues(k) = ascending(src);
    Vector v = solver.eigenvectors().col(src);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    s.eigenvectors.col(k) = v;
  }
  return s;
}

double shrink_eigenvalue(double lambda, double c, Index p, Index T) {
  return std::max(lambda - c * static_cast<double>(p) / static_cast<double>(T), 0.0);
}

ShrunkEigenvalues shrink_eigenvalues(const Vector& eigenvalues, Index K, Index p, Index T) {
  if (K < 0 || K > eigenvalues.size()) throw ConfigError("shrink_eigenvalues: K out of range");
  const double pd = static_cast<double>(p);
  const double denom = pd - static_cast<double>(K) - pd * static_cast<double>(K) / static_cast<double>(T);
  if (!(denom > 0.0)) {
    throw NumericalError("shrink_eigenvalues: p - K - pK/T must be positive");
  }
  ShrunkEigenvalues out;
  const double tail = eigenvalues.sum() - eigenvalues.head(K).sum();
  out.c = std::max(tail, 0.0) / denom;
  out.shrunk = eigenvalues;
  for (Index i = 0; i < K; ++i) out.shrunk(i) = shrink_eigenvalue(eigenvalues(i), out.c, p, T);
  return out;
}

Index default_max_factors(Index p, Index T) { return std::min({p, T, Index{30}}); }

FactorCountResult estimate_num_factors(const Matrix& values, Index max_K) {
  const Index p = values.rows();
  const Index T = values.cols();
  if (max_K < 1 || max_K > std::min(p, T)) {
    throw ConfigError("estimate_num_factors: max_K must lie in [1, min(p, T)]");
  }
  const Spectrum spectrum = spectral_decompose(sample_covariance(values));
  const double pT = static_cast<double>(p) * static_cast<double>(T);
  const double ratio = (static_cast<double>(p) + static_cast<double>(T)) / pT;
  const double penalty = ratio * std::log(1.0 / ratio);

  // ||Yc - G_K G_K' Yc||^2 = (T-1) * sum of the trailing eigenvalues. Suffix
  // sums from the smallest eigenvalue avoid cancellation.
  std::vector<double> tail(static_cast<std::size_t>(p) + 1, 0.0);
  for (Index i = p - 1; i >= 0; --i) {
    tail[static_cast<std::size_t>(i)] =
        tail[static_cast<std::size_t>(i) + 1] + std::max(spectrum.eigenvalues(i), 0.0);
  }
  const double scale = static_cast<double>(T - 1) / pT;

  FactorCountResult result;
  result.criterion.assign(static_cast<std::size_t>(max_K) + 1,
                          std::numeric_limits<double>::infinity());
  const double v0 = scale * tail[0];
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k <= max_K; ++k) {
    const double v = scale * tail[static_cast<std::size_t>(k)];
    if (!(v > 1e-14 * v0)) {
      // log(0): the panel is reproduced exactly by k factors.
      result.K = k;
      result.degenerate = true;
      return result;
    }
    const double ic = std::log(v) + static_cast<double>(k) * penalty;
    result.criterion[static_cast<std::size_t>(k)] = ic;
    if (ic < best) {
      best = ic;
      result.K = k;
    }
  }
  return result;
}

Matrix residual_panel(const Matrix& values, const Matrix& eigenvectors, Index K) {
  if (K < 0 || K > values.rows() || K > eigenvectors.cols()) {
    throw ConfigError("residual_panel: K exceeds the number of assets");
  }
  Matrix centered = center_rows(values);
  if (K == 0) return centered;
  const auto lead = eigenvectors.leftCols(K);
  return centered - lead * (lead.transpose() * centered);
}

Matrix low_rank_component(const Vector& weights, const Matrix& eigenvectors, Index K) {
  const auto lead = eigenvectors.leftCols(K);
  Matrix out = lead * weights.head(K).asDiagonal() * lead.transpose();
  return 0.5 * (out + out.transpose());
}

Matrix orthogonal_complement(const Matrix& sample_cov, const Vector& shrunk_eigenvalues,
                             const Matrix& eigenvectors, Index K) {
  if (sample_cov.rows() != eigenvectors.rows() || K > eigenvectors.cols() ||
      K > shrunk_eigenvalues.size()) {
    throw ConfigError("orthogonal_complement: shape mismatch");
  }
  Matrix s = sample_cov - low_rank_component(shrunk_eigenvalues, eigenvectors, K);
  return 0.5 * (s + s.transpose());
}

FactorFit fit_factors(const Matrix& values, const FactorOptions& options) {
  FactorFit fit;
  fit.p = values.rows();
  fit.T = values.cols();
  fit.sample_cov = sample_covariance(values);
  Spectrum spectrum = spectral_decompose(fit.sample_cov);
  fit.eigenvalues = spectrum.eigenvalues;
  fit.eigenvectors = std::move(spectrum.eigenvectors);

  if (options.fixed_K) {
    fit.K = *options.fixed_K;
    if (fit.K < 0 || fit.K >= std::min(fit.p, fit.T)) {
      throw ConfigError("fixed factor count must lie in [0, min(p, T))");
    }
  } else {
    Index max_K = options.max_K.value_or(default_max_factors(fit.p, fit.T));
    if (options.spoet) {
      // The correction constant needs p - K - pK/T > 0.
      Index bound = 0;
      while (bound + 1 <= max_K && static_cast<double>(fit.p - (bound + 1)) -
                                           static_cast<double>(fit.p * (bound + 1)) / static_cast<double>(fit.T) >
                                       0.0) {
        ++bound;
      }
      max_K = std::max<Index>(1, bound);
    }
    fit.factor_count = estimate_num_factors(values, max_K);
    fit.K = fit.factor_count->K;
  }

  if (options.spoet) {
    ShrunkEigenvalues shrunk = shrink_eigenvalues(fit.eigenvalues, fit.K, fit.p, fit.T);
    fit.shrunk_eigenvalues = std::move(shrunk.shrunk);
    fit.c = shrunk.c;
  } else {
    fit.shrunk_eigenvalues = fit.eigenvalues;
    fit.c = 0.0;
  }
  fit.loadings = fit.eigenvectors.leftCols(fit.K) *
                 fit.eigenvalues.head(fit.K).cwiseMax(0.0).cwiseSqrt().asDiagonal();
  fit.residuals = residual_panel(values, fit.eigenvectors, fit.K);
  fit.common = low_rank_component(fit.shrunk_eigenvalues, fit.eigenvectors, fit.K);
  fit.ortho_complement = fit.sample_cov - fit.common;
  fit.ortho_complement = 0.5 * (fit.ortho_complement + fit.ortho_complement.transpose()).eval();
  return fit;
}

nlohmann::json FactorFit::to_json() const {
  nlohmann::json j;
  j["K"] = K;
  j["p"] = p;
  j["T"] = T;
  j["c"] = c;
  j["eigenvalues"] = std::vector<double>(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
  j["shrunk_eigenvalues"] = std::vector<double>(shrunk_eigenvalues.data(),
                                                shrunk_eigenvalues.data() + shrunk_eigenvalues.size());
  if (factor_count) {
    j["bai_ng_degenerate"] = factor_count->degenerate;
    nlohmann::json crit = nlohmann::json::array();
    for (double v : factor_count->criterion) {
      if (std::isfinite(v)) crit.push_back(v);
      else crit.push_back(nullptr);
    }
    j["bai_ng_criterion"] = crit;
  }
  return j;
}

}  // namespace blockcov
