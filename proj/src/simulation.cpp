#include "blockcov/simulation.hpp"

#include "blockcov/errors.hpp"
#include "blockcov/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace blockcov {

namespace {

double largest_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return solver.eigenvalues()(m.rows() - 1);
}

// Places tapered correlation blocks given by `members` (ascending within a
// block) and scales to covariance with `variances`.
Matrix block_covariance(const std::vector<std::vector<Index>>& members, const Taper& taper,
                        const Vector& variances) {
  const Index p = variances.size();
  Matrix psi = Matrix::Zero(p, p);
  for (const auto& block : members) {
    const auto n = static_cast<Index>(block.size());
    const Matrix r = tapered_block(n, taper);
    for (Index a = 0; a < n; ++a) {
      for (Index b = 0; b < n; ++b) {
        const Index i = block[static_cast<std::size_t>(a)];
        const Index j = block[static_cast<std::size_t>(b)];
        psi(i, j) = r(a, b) * std::sqrt(variances(i) * variances(j));
      }
    }
  }
  return psi;
}

void check_variances(const Vector& variances, Index p) {
  if (variances.size() != p) throw ConfigError("need one idiosyncratic variance per asset");
  if ((variances.array() <= 0.0).any()) throw ConfigError("idiosyncratic variances must be positive");
}

}  // namespace

std::vector<double> default_factor_variances(Index K) {
  std::vector<double> v;
  for (Index i = 1; i <= K; ++i) {
    const double sd = 0.25 / std::sqrt(static_cast<double>(i));
    v.push_back(sd * sd);
  }
  return v;
}

std::vector<double> SimulationSpec::resolved_factor_variances() const {
  return factor_variances.empty() ? default_factor_variances(K) : factor_variances;
}

void SimulationSpec::validate() const {
  if (p < 2) throw ConfigError("simulation: p must be at least 2");
  if (T < 3) throw ConfigError("simulation: T must be at least 3");
  if (K < 0 || K > p) throw ConfigError("simulation: K must lie in [0, p]");
  if (structure == BlockStructure::Full && (M < 1 || M > p)) throw ConfigError("simulation: M must lie in [1, p]");
  if (!(connect_prob >= 0.0 && connect_prob <= 1.0)) throw ConfigError("simulation: connect_prob must lie in [0, 1]");
  if (!(taper.constant > 0.0 && taper.constant < 1.0)) throw ConfigError("simulation: taper const must lie in (0, 1)");
  if (!(taper.base > 0.0 && taper.base <= 1.0)) throw ConfigError("simulation: taper base must lie in (0, 1]");
  if (!(taper.exponent >= 0.0)) throw ConfigError("simulation: taper exponent must be nonnegative");
  if (!(df > 2.0)) throw ConfigError("simulation: df must exceed 2");
  if (reps < 1) throw ConfigError("simulation: reps must be positive");
  if (!(variance_lo > 0.0 && variance_hi >= variance_lo)) throw ConfigError("simulation: need 0 < variance_lo <= variance_hi");
  if (!(pervasiveness > 0.0)) throw ConfigError("simulation: pervasiveness must be positive");
  const auto fv = resolved_factor_variances();
  if (static_cast<Index>(fv.size()) != K) throw ConfigError("simulation: need K factor variances");
  for (std::size_t i = 0; i < fv.size(); ++i) {
    if (!(fv[i] > 0.0)) throw ConfigError("simulation: factor variances must be positive");
    if (i > 0 && fv[i] > fv[i - 1]) throw ConfigError("simulation: factor variances must be nonincreasing");
  }
}

Matrix generate_loadings(Index p, Index K, const std::vector<double>& factor_variances, std::uint64_t seed) {
  if (K > p || K < 0) throw ConfigError("generate_loadings: need 0 <= K <= p");
  if (static_cast<Index>(factor_variances.size()) != K) throw ConfigError("generate_loadings: need K variances");
  if (K == 0) return Matrix(p, 0);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Matrix x(p, K);
  for (Index j = 0; j < K; ++j) {
    for (Index i = 0; i < p; ++i) x(i, j) = normal(gen);
  }
  x.col(0).array() += 1.0;
  Eigen::HouseholderQR<Matrix> qr(x);
  Matrix q = qr.householderQ() * Matrix::Identity(p, K);
  if (q.col(0).mean() < 0.0) q.col(0) = -q.col(0);
  const double mean = q.col(0).mean();
  if (!(mean > 0.0)) throw NumericalError("generate_loadings: first column has zero mean");
  q /= mean;
  q.col(0).array() /= q.col(0).mean();  // exact unit mean after rounding
  for (Index j = 0; j < K; ++j) q.col(j) *= std::sqrt(factor_variances[static_cast<std::size_t>(j)]);
  return q;
}

Matrix tapered_block(Index size, const Taper& taper) {
  Matrix r(size, size);
  for (Index j = 0; j < size; ++j) {
    for (Index k = 0; k < size; ++k) {
      r(j, k) = j == k ? 1.0
                       : taper.constant * std::pow(taper.base, taper.exponent * static_cast<double>(std::abs(j - k)));
    }
  }
  return r;
}

IdiosyncraticDraw generate_full_block_psi(Index p, Index M, const Taper& taper, const Vector& variances,
                                          std::uint64_t seed, BlockSizes sizes) {
  if (M < 1 || M > p) throw ConfigError("generate_full_block_psi: need 1 <= M <= p");
  check_variances(variances, p);
  std::mt19937_64 gen(seed);
  // Uniform composition: M - 1 distinct cut points among the p - 1 gaps.
  std::vector<Index> gaps(static_cast<std::size_t>(p - 1));
  std::iota(gaps.begin(), gaps.end(), Index{1});
  for (Index k = 0; k < M - 1; ++k) {
    std::uniform_int_distribution<Index> pick(k, p - 2);
    std::swap(gaps[static_cast<std::size_t>(k)], gaps[static_cast<std::size_t>(pick(gen))]);
  }
  std::vector<Index> cuts(gaps.begin(), gaps.begin() + (M - 1));
  std::sort(cuts.begin(), cuts.end());
  if (sizes == BlockSizes::Equal) {
    cuts.clear();
    Index end = 0;
    for (Index b = 0; b + 1 < M; ++b) {
      end += p / M + (b < p % M ? 1 : 0);
      cuts.push_back(end);
    }
  }
  cuts.push_back(p);
  std::vector<int> raw(static_cast<std::size_t>(p));
  std::vector<std::vector<Index>> members;
  Index start = 0;
  for (std::size_t b = 0; b < cuts.size(); ++b) {
    members.emplace_back();
    for (Index i = start; i < cuts[b]; ++i) {
      raw[static_cast<std::size_t>(i)] = static_cast<int>(b);
      members.back().push_back(i);
    }
    start = cuts[b];
  }
  IdiosyncraticDraw out;
  out.labels = ClusterAssignment::from_labels(raw);
  out.psi = block_covariance(members, taper, variances);
  return out;
}

GraphDraw generate_partial_block_psi(Index p, double connect_prob, const Taper& taper, const Vector& variances,
                                     std::uint64_t seed) {
  if (!(connect_prob >= 0.0 && connect_prob <= 1.0)) throw ConfigError("connect_prob must lie in [0, 1]");
  if (p < 2) throw ConfigError("generate_partial_block_psi: need p >= 2");
  check_variances(variances, p);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<Index> other(0, p - 2);
  GraphDraw out;
  std::vector<Index> parent(static_cast<std::size_t>(p));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto root = [&](Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (Index i = 0; i < p; ++i) {
    if (unit(gen) >= connect_prob) continue;
    Index j = other(gen);
    if (j >= i) ++j;
    out.edges.emplace_back(i, j);
    const Index ri = root(i);
    const Index rj = root(j);
    if (ri != rj) parent[static_cast<std::size_t>(std::max(ri, rj))] = std::min(ri, rj);
  }
  std::vector<int> raw(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) raw[static_cast<std::size_t>(i)] = static_cast<int>(root(i));
  out.psi.labels = ClusterAssignment::from_labels(raw);
  out.psi.psi = block_covariance(out.psi.labels.members(), taper, variances);
  return out;
}

PopulationModel generate_model(const SimulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  PopulationModel model;
  model.loadings = generate_loadings(spec.p, spec.K, spec.resolved_factor_variances(), derive_seed(seed, {1}));
  model.common = model.loadings * model.loadings.transpose();

  std::mt19937_64 gen(derive_seed(seed, {2}));
  std::uniform_real_distribution<double> level(spec.variance_lo, spec.variance_hi);
  Vector variances(spec.p);
  for (Index i = 0; i < spec.p; ++i) variances(i) = level(gen);

  IdiosyncraticDraw draw =
      spec.structure == BlockStructure::Full
          ? generate_full_block_psi(spec.p, spec.M, spec.taper, variances, derive_seed(seed, {3}), spec.block_sizes)
          : generate_partial_block_psi(spec.p, spec.connect_prob, spec.taper, variances, derive_seed(seed, {3})).psi;

  if (spec.K > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(model.common, Eigen::EigenvaluesOnly);
    const double lambda_k = solver.eigenvalues()(spec.p - spec.K);
    draw.psi *= spec.pervasiveness * lambda_k / largest_eigenvalue(draw.psi);
  }
  model.psi = std::move(draw.psi);
  model.true_labels = std::move(draw.labels);
  model.sigma = model.common + model.psi;
  return model;
}

ReturnPanel sample_panel(const PopulationModel& model, Index T, double df, std::uint64_t seed) {
  if (!(df > 2.0)) throw ConfigError("sample_panel: df must exceed 2");
  if (T < 1) throw ConfigError("sample_panel: T must be positive");
  const Index p = model.psi.rows();
  const Index K = model.loadings.cols();
  Eigen::LLT<Matrix> llt(model.psi);
  if (llt.info() != Eigen::Success) throw NumericalError("sample_panel: psi is not positive definite");
  std::mt19937_64 gen(seed);
  std::student_t_distribution<double> t(df);
  const double scale = std::sqrt((df - 2.0) / df);
  Matrix f(K, T);
  for (Index c = 0; c < T; ++c) {
    for (Index k = 0; k < K; ++k) f(k, c) = scale * t(gen);
  }
  Matrix z(p, T);
  for (Index c = 0; c < T; ++c) {
    for (Index i = 0; i < p; ++i) z(i, c) = scale * t(gen);
  }
  Matrix y = llt.matrixL() * z;
  if (K > 0) y += model.loadings * f;
  return ReturnPanel::from_matrix(y);
}

}  // namespace blockcov
