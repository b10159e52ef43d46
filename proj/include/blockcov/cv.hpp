#pragma once

#include "blockcov/types.hpp"

#include <cstddef>
#include <vector>

namespace blockcov {

/// H-fold split settings shared by every data-driven tuning procedure.
struct CvOptions {
  int folds = 10;
  double train_fraction = 2.0 / 3.0;
  /// Early stopping: the 3-iteration moving average of the validation error
  /// must improve on its best value by more than `stagnation_tol` (relative)
  /// at least once every `patience` iterations.
  int patience = 5;
  double stagnation_tol = 1e-3;

  void validate() const;
};

struct Fold {
  std::vector<Index> train;  // ascending column indices
  std::vector<Index> test;
};

/// Fold h tests on a contiguous block of T - round(train_fraction T) columns
/// starting at floor(h T / H), wrapping around the end of the window; the
/// remaining columns form the training set. Throws ConfigError when either
/// side has fewer than 2 columns.
std::vector<Fold> make_folds(Index T, const CvOptions& options);

/// Columns of `m` at `cols`, in order.
Matrix take_columns(const Matrix& m, const std::vector<Index>& cols);

/// Tracks validation errors along a grid and decides when to stop.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double stagnation_tol);

  /// Records the next error; returns true when the search should stop.
  bool push(double error);

  std::size_t evaluated() const { return errors_.size(); }
  const std::vector<double>& errors() const { return errors_; }
  const std::vector<double>& moving_average() const { return moving_; }

 private:
  int patience_;
  double tol_;
  std::vector<double> errors_;
  std::vector<double> moving_;
  double best_ = 0.0;
  bool has_best_ = false;
  int since_best_ = 0;
};

}  // namespace blockcov
