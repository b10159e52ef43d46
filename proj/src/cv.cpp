#include "blockcov/cv.hpp"

#include "blockcov/errors.hpp"

#include <cmath>

namespace blockcov {

void CvOptions::validate() const {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(stagnation_tol >= 0.0)) throw ConfigError("stagnation_tol must be nonnegative");
}

std::vector<Fold> make_folds(Index T, const CvOptions& options) {
  options.validate();
  const Index train_len = static_cast<Index>(std::llround(options.train_fraction * static_cast<double>(T)));
  const Index test_len = T - train_len;
  if (train_len < 2 || test_len < 2) {
    throw ConfigError("cross-validation split leaves fewer than 2 observations on one side");
  }
  std::vector<Fold> folds;
  for (int h = 0; h < options.folds; ++h) {
    const Index start = (static_cast<Index>(h) * T) / options.folds;
    std::vector<bool> is_test(static_cast<std::size_t>(T), false);
    for (Index k = 0; k < test_len; ++k) is_test[static_cast<std::size_t>((start + k) % T)] = true;
    Fold f;
    for (Index t = 0; t < T; ++t) {
      (is_test[static_cast<std::size_t>(t)] ? f.test : f.train).push_back(t);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

Matrix take_columns(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = m.col(cols[k]);
  return out;
}

EarlyStopping::EarlyStopping(int patience, double stagnation_tol)
    : patience_(patience), tol_(stagnation_tol) {}

bool EarlyStopping::push(double error) {
  errors_.push_back(error);
  const std::size_t n = errors_.size();
  const std::size_t window = std::min<std::size_t>(3, n);
  double avg = 0.0;
  for (std::size_t k = n - window; k < n; ++k) avg += errors_[k];
  avg /= static_cast<double>(window);
  moving_.push_back(avg);
  if (n < 3) return false;  // the average is only defined over 3 iterations

  if (!has_best_ || avg < best_ - tol_ * std::abs(best_)) {
    best_ = avg;
    has_best_ = true;
    since_best_ = 0;
    return false;
  }
  if (avg < best_) best_ = avg;
  return ++since_best_ >= patience_;
}

}  // namespace blockcov
