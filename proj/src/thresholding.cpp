#include "blockcov/thresholding.hpp"

#include "blockcov/errors.hpp"
#include "blockcov/factor_core.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace blockcov {

namespace {

double sign(double z) { return (z > 0.0) - (z < 0.0); }

// |z| reduced by `amount` (<= t), rounded so that the computed |z| - m never
// exceeds t.
double shrunk_magnitude(double az, double amount, double t) {
  double m = std::max(az - amount, 0.0);
  while (az - m > t) m = std::nextafter(m, az);
  return m;
}

double soft(double z, double t) { return sign(z) * shrunk_magnitude(std::abs(z), t, t); }

}  // namespace

void ThresholdRule::validate() const {
  if (!(tau >= 0.0)) throw ConfigError("threshold tau must be nonnegative");
  if (kind == ThresholdKind::SCAD && !(a > 2.0)) throw ConfigError("SCAD requires a > 2");
  if (kind == ThresholdKind::AL && !(a > 0.0)) throw ConfigError("adaptive lasso requires a > 0");
}

double apply_operator(const ThresholdRule& rule, double z, double tau_ij) {
  if (!(tau_ij >= 0.0)) throw ConfigError("entry-wise threshold must be nonnegative");
  const double az = std::abs(z);
  switch (rule.kind) {
    case ThresholdKind::HARD:
      // Strict inequality keeps f(z) = 0 on the whole kill zone |z| <= tau.
      return az > tau_ij ? z : 0.0;
    case ThresholdKind::SOFT:
      return soft(z, tau_ij);
    case ThresholdKind::AL: {
      if (!(rule.a > 0.0)) throw ConfigError("adaptive lasso requires a > 0");
      if (az <= tau_ij) return 0.0;
      // tau^(a+1) |z|^-a written as tau (tau/|z|)^a to stay in range.
      const double shrink = tau_ij * std::pow(tau_ij / az, rule.a);
      return sign(z) * shrunk_magnitude(az, shrink, tau_ij);
    }
    case ThresholdKind::SCAD: {
      const double a = rule.a;
      if (!(a > 2.0)) throw ConfigError("SCAD requires a > 2");
      if (az <= 2.0 * tau_ij) return soft(z, tau_ij);
      if (az <= a * tau_ij) return sign(z) * shrunk_magnitude(az, (a * tau_ij - az) / (a - 2.0), tau_ij);
      return z;
    }
  }
  return z;
}

Matrix theta_hat(const Matrix& residuals, const Matrix& S) {
  if (residuals.rows() != S.rows() || S.rows() != S.cols()) {
    throw ConfigError("theta_hat: shape mismatch");
  }
  const double T = static_cast<double>(residuals.cols());
  // Expanded square: mean(e_i^2 e_j^2) - 2 S_ij mean(e_i e_j) + S_ij^2.
  const Matrix sq = residuals.array().square().matrix();
  const Matrix fourth = sq * sq.transpose() / T;
  const Matrix second = residuals * residuals.transpose() / T;
  Matrix theta = fourth.array() - 2.0 * S.array() * second.array() + S.array().square();
  theta = theta.cwiseMax(0.0);
  return 0.5 * (theta + theta.transpose());
}

Matrix adaptive_tau(const Matrix& theta, double tau, Index p, Index T) {
  if (p < 2) throw ConfigError("adaptive_tau: p must be at least 2");
  if (T < 1) throw ConfigError("adaptive_tau: T must be positive");
  if (!(tau >= 0.0)) throw ConfigError("adaptive_tau: tau must be nonnegative");
  const double factor = std::log(static_cast<double>(p)) / static_cast<double>(T);
  return tau * (theta.cwiseMax(0.0) * factor).cwiseSqrt();
}

Matrix threshold_complement(const Matrix& S, const ThresholdRule& rule, const Matrix& tau_matrix) {
  if (S.rows() != S.cols() || tau_matrix.rows() != S.rows() || tau_matrix.cols() != S.cols()) {
    throw ConfigError("threshold_complement: shape mismatch");
  }
  rule.validate();
  const Index p = S.rows();
  Matrix out(p, p);
  for (Index j = 0; j < p; ++j) {
    out(j, j) = S(j, j);
    for (Index i = j + 1; i < p; ++i) {
      const double tau_ij = 0.5 * (tau_matrix(i, j) + tau_matrix(j, i));
      const double v = apply_operator(rule, 0.5 * (S(i, j) + S(j, i)), tau_ij);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

bool is_positive_definite(const Matrix& m, double rel_tol) {
  const Index n = m.rows();
  if (n == 0) return false;
  const double shift = rel_tol * m.trace() / static_cast<double>(n);
  if (!(shift >= 0.0)) return false;
  Matrix shifted = m;
  shifted.diagonal().array() -= shift;
  Eigen::LLT<Matrix> llt(shifted);
  return llt.info() == Eigen::Success;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw ConfigError("log_grid: invalid bounds");
  std::vector<double> grid;
  if (count == 1) return {lo};
  const double step = std::log(hi / lo) / static_cast<double>(count - 1);
  for (int k = 0; k < count; ++k) grid.push_back(lo * std::exp(step * k));
  grid.back() = hi;
  return grid;
}

TauSelection select_tau(const Matrix& residuals, const Matrix& S, const ThresholdRule& rule,
                        const std::vector<double>& grid, const CvOptions& cv) {
  if (grid.empty()) throw ConfigError("select_tau: empty tau grid");
  rule.validate();
  const Index p = S.rows();
  const Index T = residuals.cols();

  struct FoldData {
    Matrix s_train;
    Matrix s_test;
    Matrix unit_tau;  // sqrt(theta log p / T_train), i.e. tau_ij at tau = 1
  };
  std::vector<FoldData> folds;
  for (const Fold& f : make_folds(T, cv)) {
    FoldData d;
    const Matrix train = center_rows(take_columns(residuals, f.train));
    d.s_train = sample_covariance(train);
    d.s_test = sample_covariance(take_columns(residuals, f.test));
    d.unit_tau = adaptive_tau(theta_hat(train, d.s_train), 1.0, p, train.cols());
    folds.push_back(std::move(d));
  }
  const Matrix unit_tau_full = adaptive_tau(theta_hat(residuals, S), 1.0, p, T);

  TauSelection sel;
  sel.grid = grid;
  double best = std::numeric_limits<double>::infinity();
  int best_k = -1;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    ThresholdRule r = rule;
    r.tau = grid[k];
    r.validate();
    double err = 0.0;
    for (const auto& d : folds) {
      err += (threshold_complement(d.s_train, r, grid[k] * d.unit_tau) - d.s_test).squaredNorm();
    }
    err /= static_cast<double>(folds.size());
    const bool pd = is_positive_definite(threshold_complement(S, r, grid[k] * unit_tau_full));
    sel.cv_error.push_back(err);
    sel.positive_definite.push_back(pd);
    if (pd && (err < best || (err == best && best_k >= 0 && grid[k] > grid[static_cast<std::size_t>(best_k)]))) {
      best = err;
      best_k = static_cast<int>(k);
    }
  }

  if (best_k < 0) {
    sel.diagonal_fallback = true;
    sel.tau = std::numeric_limits<double>::infinity();
    sel.psi = S.diagonal().asDiagonal();
    return sel;
  }
  sel.tau = grid[static_cast<std::size_t>(best_k)];
  ThresholdRule r = rule;
  r.tau = sel.tau;
  sel.psi = threshold_complement(S, r, sel.tau * unit_tau_full);
  return sel;
}

}  // namespace blockcov
