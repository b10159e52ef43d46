#include "blockcov/block_shrinkage.hpp"

#include "blockcov/errors.hpp"
#include "blockcov/factor_core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace blockcov {

namespace {

double min_eigenvalue(const Matrix& m) {
  if (m.rows() == 1) return m(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("block eigendecomposition failed");
  return solver.eigenvalues()(0);
}

bool certified(double min_eig, const Matrix& m) {
  return min_eig > 1e-10 * m.trace() / static_cast<double>(m.rows());
}

}  // namespace

std::vector<Block> apply_mask(const Matrix& S, const ClusterAssignment& assignment) {
  if (S.rows() != S.cols() || S.rows() != static_cast<Index>(assignment.size())) {
    throw DataError("apply_mask: shape mismatch");
  }
  std::vector<Block> blocks;
  for (auto& members : assignment.members()) {
    Block b;
    b.members = std::move(members);
    const auto n = static_cast<Index>(b.members.size());
    b.values.resize(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        b.values(i, j) = S(b.members[static_cast<std::size_t>(i)], b.members[static_cast<std::size_t>(j)]);
      }
    }
    blocks.push_back(std::move(b));
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const Block& a, const Block& b) { return a.members.front() < b.members.front(); });
  return blocks;
}

std::vector<Block> apply_mask(const Matrix& S, const Mask& C) {
  if (C.c.rows() != S.rows() || C.c.cols() != S.cols()) throw DataError("apply_mask: shape mismatch");
  return apply_mask(S, C.to_assignment());
}

Matrix constant_correlation_target(const Matrix& block) {
  const Index n = block.rows();
  if (block.cols() != n) throw DataError("constant_correlation_target: block is not square");
  if ((block.diagonal().array() <= 0.0).any()) {
    throw DataError("constant_correlation_target: nonpositive variance in block");
  }
  if (n == 1) return block;
  const Vector sd = block.diagonal().cwiseSqrt();
  double rsum = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i != j) rsum += block(i, j) / (sd(i) * sd(j));
    }
  }
  const double rbar = rsum / static_cast<double>(n * (n - 1));
  Matrix target = rbar * (sd * sd.transpose());
  target.diagonal() = block.diagonal();
  return target;
}

LwIntensity lw_intensity(const Matrix& block_residuals, const Matrix& block, const Matrix& target,
                         const LwOptions& options) {
  const Index n = block.rows();
  const Index T = block_residuals.cols();
  if (block_residuals.rows() != n || target.rows() != n || target.cols() != n) {
    throw DataError("lw_intensity: shape mismatch");
  }
  if (T < 2) throw DataError("lw_intensity: need at least 2 observations");
  LwIntensity out;
  if (n == 1) return out;

  const double Td = static_cast<double>(T);
  const Matrix y = center_rows(block_residuals);
  const Matrix y2 = y.array().square().matrix();
  const Matrix y3 = (y2.array() * y.array()).matrix();
  const Matrix m11 = y * y.transpose() / Td;       // mean(y_i y_j)
  const Matrix m22 = y2 * y2.transpose() / Td;     // mean(y_i^2 y_j^2)
  const Matrix m31 = y3 * y.transpose() / Td;      // mean(y_i^3 y_j)
  const Vector m2 = y2.rowwise().mean();           // mean(y_i^2)
  const Vector s = block.diagonal();

  // pi_ij = mean((y_i y_j - S_ij)^2)
  const Matrix pi_mat = m22.array() - 2.0 * block.array() * m11.array() + block.array().square();
  out.pi = pi_mat.sum();

  // theta(i, j) = mean((y_i^2 - S_ii)(y_i y_j - S_ij))
  Matrix theta(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      theta(i, j) = m31(i, j) - block(i, j) * m2(i) - s(i) * m11(i, j) + s(i) * block(i, j);
    }
  }

  const Vector sd = s.cwiseSqrt();
  double rsum = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i != j) rsum += block(i, j) / (sd(i) * sd(j));
    }
  }
  const double rbar = rsum / static_cast<double>(n * (n - 1));

  double off = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i == j) continue;
      const double ratio_ij = std::sqrt(s(j) / s(i));
      const double ratio_ji = options.literal ? s(i) / s(j) : std::sqrt(s(i) / s(j));
      off += 0.5 * rbar * (ratio_ij * theta(i, j) + ratio_ji * theta(j, i));
    }
  }
  out.rho = pi_mat.diagonal().sum() + off;

  if (options.literal) {
    Matrix f = rbar * (sd * sd.transpose());
    out.gamma = f.squaredNorm();
  } else {
    out.gamma = (target - block).squaredNorm();
  }

  const double clamp_hi = 1.0;
  if (!(out.gamma > 1e-14 * block.squaredNorm())) {
    out.degenerate = true;
    out.kappa = 0.0;
    out.alpha = 1.0;
    return out;
  }
  out.kappa = (out.pi - out.rho) / out.gamma;
  const double clamped = std::max(0.0, std::min(out.kappa / Td, clamp_hi));
  // The clamped ratio is the target weight in the standard formulation.
  out.alpha = options.literal ? clamped : 1.0 - clamped;
  return out;
}

Matrix shrink_block(const Matrix& block, const Matrix& target, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("shrink_block: alpha must lie in [0, 1]");
  Matrix out = alpha * block + (1.0 - alpha) * target;
  return 0.5 * (out + out.transpose());
}

IdiosyncraticEstimate assemble_psi(std::vector<ShrunkBlock> blocks, Index p) {
  IdiosyncraticEstimate est;
  est.psi = Matrix::Zero(p, p);
  std::vector<bool> covered(static_cast<std::size_t>(p), false);
  est.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (auto& b : blocks) {
    const auto n = static_cast<Index>(b.members.size());
    if (b.values.rows() != n || b.values.cols() != n) throw DataError("assemble_psi: block shape mismatch");
    for (Index i = 0; i < n; ++i) {
      const Index gi = b.members[static_cast<std::size_t>(i)];
      if (gi < 0 || gi >= p || covered[static_cast<std::size_t>(gi)]) {
        throw DataError("assemble_psi: blocks overlap or index out of range");
      }
      covered[static_cast<std::size_t>(gi)] = true;
      for (Index j = 0; j < n; ++j) est.psi(gi, b.members[static_cast<std::size_t>(j)]) = b.values(i, j);
    }
    b.min_eigenvalue = min_eigenvalue(b.values);
    if (!certified(b.min_eigenvalue, b.values)) {
      throw NumericalError("assemble_psi: block starting at asset " + std::to_string(b.members.front()) +
                           " is not positive definite (min eigenvalue " + std::to_string(b.min_eigenvalue) + ")");
    }
    est.min_eigenvalue = std::min(est.min_eigenvalue, b.min_eigenvalue);
  }
  if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
    throw DataError("assemble_psi: blocks do not cover every asset");
  }
  est.blocks = std::move(blocks);
  return est;
}

IdiosyncraticEstimate estimate_block_psi(const Matrix& S, const Matrix& residuals,
                                         const ClusterAssignment& assignment,
                                         const ShrinkageOptions& options) {
  if (!(options.pd_floor > 0.0 && options.pd_floor <= 1.0)) {
    throw ConfigError("pd_floor must lie in (0, 1]");
  }
  const Index T = residuals.cols();
  std::vector<ShrunkBlock> shrunk;
  for (Block& b : apply_mask(S, assignment)) {
    ShrunkBlock sb;
    sb.members = b.members;
    const auto n = static_cast<Index>(b.members.size());
    if (n == 1) {
      sb.values = b.values;
      sb.alpha = 1.0;
      shrunk.push_back(std::move(sb));
      continue;
    }
    Matrix rows(n, T);
    for (Index i = 0; i < n; ++i) rows.row(i) = residuals.row(b.members[static_cast<std::size_t>(i)]);
    const Matrix target = constant_correlation_target(b.values);
    const LwIntensity lw = lw_intensity(rows, b.values, target, options.lw);
    double alpha = lw.alpha;
    if (n >= T) alpha = std::min(alpha, 1.0 - options.pd_floor);
    sb.values = shrink_block(b.values, target, alpha);
    // Repair: move weight to the target until the block is certified.
    double weight = std::max(1.0 - alpha, options.pd_floor);
    while (!certified(min_eigenvalue(sb.values), sb.values) && alpha > 0.0) {
      alpha = std::max(0.0, std::min(alpha, 1.0 - weight));
      sb.values = shrink_block(b.values, target, alpha);
      weight = std::min(1.0, 2.0 * weight);
    }
    sb.alpha = alpha;
    shrunk.push_back(std::move(sb));
  }
  return assemble_psi(std::move(shrunk), S.rows());
}

}  // namespace blockcov
