#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "blockcov/errors.hpp"
#include "blockcov/factor_core.hpp"
#include "blockcov/thresholding.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <random>

using namespace blockcov;

namespace {

const ThresholdRule kRules[] = {ThresholdRule::hard(), ThresholdRule::soft(), ThresholdRule::adaptive_lasso(0, 3.0),
                                ThresholdRule::scad(0, 3.7)};

}  // namespace

TEST_CASE("hand-computed operator values") {
  CHECK(apply_operator(ThresholdRule::soft(), 2.0, 0.5) == doctest::Approx(1.5));
  CHECK(apply_operator(ThresholdRule::soft(), -2.0, 0.5) == doctest::Approx(-1.5));
  CHECK(apply_operator(ThresholdRule::hard(), 0.6, 0.5) == 0.6);
  CHECK(apply_operator(ThresholdRule::hard(), 0.5, 0.5) == 0.0);
  // AL: |z| - tau^(a+1) |z|^-a with a = 3, z = 2, tau = 1 -> 2 - 1/8.
  CHECK(apply_operator(ThresholdRule::adaptive_lasso(0, 3.0), 2.0, 1.0) == doctest::Approx(1.875));
  // SCAD branches with a = 3.7, tau = 1.
  const auto scad = ThresholdRule::scad(0, 3.7);
  CHECK(apply_operator(scad, 1.5, 1.0) == doctest::Approx(0.5));
  CHECK(apply_operator(scad, 3.0, 1.0) == doctest::Approx((2.7 * 3.0 - 3.7) / 1.7));
  CHECK(apply_operator(scad, -3.0, 1.0) == doctest::Approx(-(2.7 * 3.0 - 3.7) / 1.7));
  CHECK(apply_operator(scad, 5.0, 1.0) == 5.0);
  // SCAD is continuous at both knots.
  CHECK(apply_operator(scad, 2.0, 1.0) == doctest::Approx((2.7 * 2.0 - 3.7) / 1.7));
  CHECK(apply_operator(scad, 3.7, 1.0) == doctest::Approx(3.7));
}

TEST_CASE("generalised thresholding axioms on random triples") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> zdist(-5, 5), tdist(0, 3);
  for (int n = 0; n < 20000; ++n) {
    const double z = zdist(gen), tau = tdist(gen);
    for (const auto& rule : kRules) {
      const double f = apply_operator(rule, z, tau);
      CHECK(std::abs(f) <= std::abs(z) + 1e-15);
      if (std::abs(z) <= tau) CHECK(f == 0.0);
      CHECK(std::abs(f - z) <= tau);
    }
  }
}

TEST_CASE("rule validation") {
  CHECK_THROWS_AS(ThresholdRule::scad(0, 2.0).validate(), ConfigError);
  CHECK_THROWS_AS(ThresholdRule::adaptive_lasso(0, 0.0).validate(), ConfigError);
  CHECK_THROWS_AS(ThresholdRule::soft(-1.0).validate(), ConfigError);
  CHECK_THROWS_AS(apply_operator(ThresholdRule::soft(), 1.0, -0.1), ConfigError);
}

TEST_CASE("theta_hat matches the triple loop") {
  const Matrix e = center_rows(testing::gaussian(5, 50, 3));
  const Matrix S = sample_covariance(e);
  const Matrix th = theta_hat(e, S);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) {
      double acc = 0;
      for (Index t = 0; t < 50; ++t) {
        const double d = e(i, t) * e(j, t) - S(i, j);
        acc += d * d;
      }
      CHECK(th(i, j) == doctest::Approx(acc / 50).epsilon(1e-10));
    }
  }
}

TEST_CASE("adaptive_tau formula and threshold_complement structure") {
  Matrix theta(2, 2);
  theta << 1, 4, 4, 9;
  const Matrix tau = adaptive_tau(theta, 2.0, 10, 100);
  CHECK(tau(0, 1) == doctest::Approx(2.0 * std::sqrt(4 * std::log(10.0) / 100)));
  CHECK_THROWS_AS(adaptive_tau(theta, 1.0, 1, 100), ConfigError);

  const Matrix S = testing::random_spd(6, 9);
  const Matrix big = Matrix::Constant(6, 6, 1e3);
  const Matrix psi = threshold_complement(S, ThresholdRule::soft(), big);
  CHECK(psi.diagonal() == S.diagonal());
  CHECK((psi - Matrix(S.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  const Matrix zero = Matrix::Zero(6, 6);
  const Matrix same = threshold_complement(S, ThresholdRule::hard(), zero);
  CHECK((same - S).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((same - same.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("is_positive_definite and log_grid") {
  CHECK(is_positive_definite(Matrix::Identity(3, 3)));
  Matrix m(2, 2);
  m << 1, 1, 1, 1;
  CHECK_FALSE(is_positive_definite(m));
  const auto g = log_grid(0.1, 10, 3);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(0.1));
  CHECK(g[1] == doctest::Approx(1.0));
  CHECK(g[2] == 10.0);
}

TEST_CASE("select_tau returns a positive definite estimate and a consistent CV curve") {
  const Matrix e = center_rows(testing::gaussian(20, 120, 41));
  const Matrix S = sample_covariance(e);
  CvOptions cv;
  const auto grid = log_grid(0.05, 5, 12);
  for (const auto& rule : kRules) {
    const TauSelection sel = select_tau(e, S, rule, grid, cv);
    CHECK(sel.cv_error.size() == grid.size());
    CHECK(is_positive_definite(sel.psi));
    if (!sel.diagonal_fallback) {
      // The selected tau minimises the error over the PD grid points.
      for (std::size_t k = 0; k < grid.size(); ++k) {
        if (sel.positive_definite[k]) CHECK(sel.cv_error[k] >= sel.cv_error[std::find(grid.begin(), grid.end(), sel.tau) - grid.begin()]);
      }
    }
  }
}

TEST_CASE("select_tau falls back to the diagonal when nothing is positive definite") {
  // Rank-deficient complement: every off-diagonal threshold leaves a singular matrix.
  Matrix e = testing::gaussian(3, 60, 5);
  e.row(2) = e.row(0) + e.row(1);
  e = center_rows(e);
  Matrix S = sample_covariance(e);
  const TauSelection sel = select_tau(e, S, ThresholdRule::hard(), {1e-6}, CvOptions{});
  CHECK(sel.diagonal_fallback);
  CHECK(std::isinf(sel.tau));
  CHECK((sel.psi - Matrix(S.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
}
