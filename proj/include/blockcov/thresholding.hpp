#pragma once

#include "blockcov/cv.hpp"
#include "blockcov/types.hpp"

#include <vector>

namespace blockcov {

enum class ThresholdKind { HARD, SOFT, AL, SCAD };

/// A generalised thresholding operator. `a` is the adaptive-lasso exponent
/// (AL, a > 0) or the SCAD constant (a > 2); HARD and SOFT ignore it.
struct ThresholdRule {
  ThresholdKind kind = ThresholdKind::SOFT;
  double tau = 0.0;
  double a = 0.0;

  static ThresholdRule hard(double tau = 0.0) { return {ThresholdKind::HARD, tau, 0.0}; }
  static ThresholdRule soft(double tau = 0.0) { return {ThresholdKind::SOFT, tau, 0.0}; }
  static ThresholdRule adaptive_lasso(double tau = 0.0, double a = 3.0) { return {ThresholdKind::AL, tau, a}; }
  static ThresholdRule scad(double tau = 0.0, double a = 3.7) { return {ThresholdKind::SCAD, tau, a}; }

  /// Throws ConfigError for an invalid shape parameter or negative tau.
  void validate() const;
};

/// f_tau(z) for the rule's kind at the entry-wise threshold `tau_ij`.
double apply_operator(const ThresholdRule& rule, double z, double tau_ij);

/// theta_ij = T^-1 sum_t (e_it e_jt - S_ij)^2.
Matrix theta_hat(const Matrix& residuals, const Matrix& S);

/// tau * sqrt(theta_ij log(p) / T). Throws ConfigError for p < 2 or tau < 0.
Matrix adaptive_tau(const Matrix& theta, double tau, Index p, Index T);

/// Keeps the diagonal of S and thresholds every off-diagonal entry.
Matrix threshold_complement(const Matrix& S, const ThresholdRule& rule, const Matrix& tau_matrix);

/// Smallest eigenvalue check: true iff lambda_min(m) > rel_tol * tr(m) / n.
bool is_positive_definite(const Matrix& m, double rel_tol = 1e-10);

/// `count` log-spaced values from `lo` to `hi` inclusive.
std::vector<double> log_grid(double lo, double hi, int count);

struct TauSelection {
  double tau = 0.0;  // +inf when the diagonal fallback was used
  Matrix psi;
  std::vector<double> grid;
  std::vector<double> cv_error;  // mean squared Frobenius error per grid value
  std::vector<bool> positive_definite;
  bool diagonal_fallback = false;
};

/// Cross-validated choice of tau: among grid values whose full-window
/// estimate is positive definite, the one with the smallest mean
/// ||threshold(S_train) - S_test||_F^2 over the folds (ties go to the larger
/// tau). When no grid value gives a positive definite estimate the diagonal
/// of S is returned.
TauSelection select_tau(const Matrix& residuals, const Matrix& S, const ThresholdRule& rule,
                        const std::vector<double>& grid, const CvOptions& cv);

}  // namespace blockcov
