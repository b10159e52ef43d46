#pragma once

#include "blockcov/types.hpp"

#include <vector>

namespace blockcov {

/// One diagonal block of a masked matrix.
struct Block {
  std::vector<Index> members;  // ascending asset indices
  Matrix values;               // members x members
};

/// S o C as a list of dense diagonal blocks, ordered by first member.
/// Throws DataError when C is not an equivalence-relation mask.
std::vector<Block> apply_mask(const Matrix& S, const Mask& C);
std::vector<Block> apply_mask(const Matrix& S, const ClusterAssignment& assignment);

/// Sample variances on the diagonal, rbar sqrt(s_ii s_jj) elsewhere, where
/// rbar averages the block's off-diagonal correlations. 1x1 blocks pass
/// through. Throws DataError for a nonpositive diagonal entry.
Matrix constant_correlation_target(const Matrix& block);

/// Ledoit-Wolf constant-correlation quantities for one block.
struct LwIntensity {
  double pi = 0.0;
  double rho = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
  /// Weight on the sample block in alpha S + (1 - alpha) target.
  double alpha = 1.0;
  bool degenerate = false;  // gamma == 0: target coincides with the sample
};

struct LwOptions {
  /// Reproduce the appendix formulas as printed: gamma without the sample
  /// term, the second eta ratio without a square root and clamp(kappa/T)
  /// used as the sample weight. Off by default.
  bool literal = false;
};

/// `block_residuals` holds the block's residual rows (n x T); they are
/// centred here. `block` and `target` are n x n.
LwIntensity lw_intensity(const Matrix& block_residuals, const Matrix& block, const Matrix& target,
                         const LwOptions& options = {});

/// alpha * block + (1 - alpha) * target, symmetrised.
Matrix shrink_block(const Matrix& block, const Matrix& target, double alpha);

struct ShrunkBlock {
  std::vector<Index> members;
  Matrix values;
  double alpha = 1.0;
  double min_eigenvalue = 0.0;
};

struct IdiosyncraticEstimate {
  Matrix psi;
  std::vector<ShrunkBlock> blocks;
  double min_eigenvalue = 0.0;  // min over the per-block minima
};

/// Places the blocks back in asset order. Throws NumericalError when the
/// certificate is not positive and DataError when blocks overlap or leave an
/// asset uncovered.
IdiosyncraticEstimate assemble_psi(std::vector<ShrunkBlock> blocks, Index p);

struct ShrinkageOptions {
  /// Minimum target weight for blocks with at least T members, and the
  /// first step when a block has to be repaired to reach positive
  /// definiteness.
  double pd_floor = 1e-3;
  LwOptions lw;
};

/// Mask, shrink every block toward its constant-correlation target with the
/// Ledoit-Wolf intensity, and assemble. `residuals` is p x T.
IdiosyncraticEstimate estimate_block_psi(const Matrix& S, const Matrix& residuals,
                                         const ClusterAssignment& assignment,
                                         const ShrinkageOptions& options = {});

}  // namespace blockcov
