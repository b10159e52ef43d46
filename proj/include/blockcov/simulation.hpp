#pragma once

#include "blockcov/panel_io.hpp"
#include "blockcov/types.hpp"

#include <cstdint>
#include <vector>

namespace blockcov {

struct Taper {
  double constant = 0.3;
  double base = 0.9;
  double exponent = 0.1;
};

enum class BlockStructure { Full, Partial };

/// Full case block sizes: a uniform random composition of p into M parts,
/// or M parts as equal as possible (the first p mod M blocks get one extra).
enum class BlockSizes { Random, Equal };

struct SimulationSpec {
  Index p = 300;
  Index T = 250;
  Index K = 5;
  BlockStructure structure = BlockStructure::Full;
  Index M = 10;
  BlockSizes block_sizes = BlockSizes::Random;
  double connect_prob = 0.5;
  Taper taper;
  /// (0.25 / sqrt(i))^2 for i = 1..K when empty.
  std::vector<double> factor_variances;
  double df = 5.0;
  int reps = 25;
  std::uint64_t seed = 0;
  /// Idiosyncratic variances are U[lo, hi] times a common level chosen so
  /// that the largest psi eigenvalue is `pervasiveness` times the K-th
  /// eigenvalue of the common component.
  double variance_lo = 0.5;
  double variance_hi = 1.5;
  double pervasiveness = 0.5;

  std::vector<double> resolved_factor_variances() const;
  /// Throws ConfigError on an invalid field.
  void validate() const;
};

std::vector<double> default_factor_variances(Index K);

struct PopulationModel {
  Matrix loadings;  // p x K
  Matrix common;
  Matrix psi;
  Matrix sigma;
  ClusterAssignment true_labels;
};

/// Orthonormal columns from the QR factorisation of a Gaussian draw (the
/// first column's draw is shifted by 1 so its mean is bounded away from 0),
/// all scaled so that column 1 averages 1, then column i multiplied by
/// sqrt(factor_variances[i]). Throws ConfigError when K > p.
Matrix generate_loadings(Index p, Index K, const std::vector<double>& factor_variances, std::uint64_t seed);

/// R_jk = constant * base^(exponent |j - k|) off the diagonal, 1 on it.
Matrix tapered_block(Index size, const Taper& taper);

struct IdiosyncraticDraw {
  Matrix psi;
  ClusterAssignment labels;
};

/// Contiguous blocks whose sizes follow `sizes`. `variances` has length p.
/// Throws ConfigError unless 1 <= M <= p.
IdiosyncraticDraw generate_full_block_psi(Index p, Index M, const Taper& taper, const Vector& variances,
                                          std::uint64_t seed, BlockSizes sizes = BlockSizes::Random);

struct GraphDraw {
  IdiosyncraticDraw psi;
  std::vector<std::pair<Index, Index>> edges;
};

/// Every asset is, with probability connect_prob, joined to one asset drawn
/// uniformly from the other p - 1. Connected components become blocks; a
/// block is tapered along the ascending order of its members.
GraphDraw generate_partial_block_psi(Index p, double connect_prob, const Taper& taper, const Vector& variances,
                                     std::uint64_t seed);

/// Loadings, idiosyncratic structure and variance levels for one repetition.
PopulationModel generate_model(const SimulationSpec& spec, std::uint64_t seed);

/// Y_t = B F_t + chol(psi) z_t with F and z independent Student-t(df) draws
/// scaled to unit variance. Throws ConfigError unless df > 2.
ReturnPanel sample_panel(const PopulationModel& model, Index T, double df, std::uint64_t seed);

}  // namespace blockcov
