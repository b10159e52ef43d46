#pragma once

#include "blockcov/estimators.hpp"
#include "blockcov/panel_io.hpp"
#include "blockcov/simulation.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace blockcov {

/// sqrt(sum (A - B)^2). Throws DataError on a shape mismatch.
double frobenius_error(const Matrix& a, const Matrix& b);

/// Counts over the strict upper triangle.
struct SparsityConfusion {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

struct ClassificationScores {
  double f1 = 0.0;
  double accuracy = 0.0;
  double tp_rate = 0.0;  // recall
  double tn_rate = 0.0;
  SparsityConfusion counts;
};

/// Entries with |value| > tol count as nonzero. Rates with an empty
/// denominator are 1 when there was nothing to find and F1 is 0 when
/// precision + recall is 0.
ClassificationScores classification_metrics(const Matrix& psi_hat, const Matrix& psi_true, double tol);

/// Share of unordered pairs on which the labelings agree.
double rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// P(X >= n_plus) for X ~ Binomial(n, 1/2).
double paired_sign_test(std::int64_t n_plus, std::int64_t n);

/// Sigma^-1 1 / (1' Sigma^-1 1). Throws NumericalError when Cholesky fails.
Vector gmv_weights(const Matrix& sigma);

/// sqrt(w' Sigma w), times sqrt(252) when annualised.
double portfolio_risk(const Vector& w, const Matrix& sigma, bool annualize);

/// Measures recorded per method and repetition, in table order.
const std::vector<std::string>& simulation_measures();
/// True when larger values are better.
bool higher_is_better(const std::string& measure);

struct StudyOptions {
  SimulationSpec spec;
  std::vector<Method> methods;
  EstimatorConfig estimator;
  /// Estimate with the true factor count instead of Bai-Ng.
  bool use_true_K = true;
  /// Method compared against every other method in the sign tests; the
  /// first listed method when empty.
  std::string reference;
  double nonzero_tol = 1e-12;
  int threads = 1;
};

/// Repetitions run in parallel; each one derives its seeds from
/// (spec.seed, repetition) only, so the report does not depend on `threads`.
Report run_simulation_study(const StudyOptions& options);

struct BacktestOptions {
  std::vector<Method> methods;
  EstimatorConfig estimator;
  Index train_len = 252;
  Index hold_len = 22;
  Index p = 100;
  int threads = 1;
};

/// floor((T - train_len) / hold_len).
Index backtest_window_count(Index T, Index train_len, Index hold_len);

/// Rolling GMV backtest. Window w trains on columns
/// [w hold, w hold + train_len) and holds for the next hold_len columns.
/// Market caps are read on the last training day.
Report run_backtest(const ReturnPanel& panel, const MarketCapPanel& caps, const ClassificationMap& classes,
                    const BacktestOptions& options);

}  // namespace blockcov
