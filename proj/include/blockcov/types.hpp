#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace blockcov {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Per-asset cluster labels. Labels are compact: they cover 0..M-1.
struct ClusterAssignment {
  std::vector<int> labels;
  int num_clusters = 0;
  std::vector<int> sizes;

  /// Builds a compact assignment from arbitrary integer labels. Labels are
  /// renumbered in order of first appearance.
  static ClusterAssignment from_labels(const std::vector<int>& raw);
  static ClusterAssignment singletons(std::size_t p);
  static ClusterAssignment single_cluster(std::size_t p);

  std::size_t size() const { return labels.size(); }
  /// Member indices of every cluster, ascending within each cluster.
  std::vector<std::vector<Index>> members() const;
};

/// Zero-one co-membership matrix C with C_ij = 1 iff i and j share a label.
struct Mask {
  Matrix c;

  static Mask from_assignment(const ClusterAssignment& a);
  /// Recovers the labelling; throws DataError when `c` is not an
  /// equivalence-relation matrix.
  ClusterAssignment to_assignment() const;
  bool is_equivalence() const;
};

enum class Method { CSH, CSK, CSI, SOFT, AL, SCAD, HARD, DIAG };

std::string to_string(Method m);
/// Throws ConfigError for unknown names.
Method method_from_string(const std::string& s);
bool is_clustering_method(Method m);
bool is_thresholding_method(Method m);

}  // namespace blockcov
