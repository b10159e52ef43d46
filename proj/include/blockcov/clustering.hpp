#pragma once

#include "blockcov/cv.hpp"
#include "blockcov/panel_io.hpp"
#include "blockcov/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace blockcov {

/// 1 - Pearson correlation between residual rows. Throws DataError when a
/// row has zero variance.
Matrix correlation_distance(const Matrix& residuals);

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 100;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  ClusterAssignment assignment;
  double loss = 0.0;  // sum over assets of 1 - r(asset, own centroid)
  /// Loss after every assignment step of the winning restart.
  std::vector<double> loss_trace;
};

/// k-means under the correlation distance. Rows are standardised (centred,
/// unit norm) so that a centroid is the mean of its members' standardised
/// residuals and 1 - r is the point-to-centroid distance. Seeding is
/// k-means++ with the correlation distance; empty clusters are re-seeded with
/// the point farthest from its centroid; the best of `restarts` runs wins.
/// Throws ConfigError unless 1 <= M <= p.
KMeansResult kmeans(const Matrix& residuals, int M, const KMeansOptions& options);

/// D_ij = sqrt(theta_ij log(p) / T) / |S_ij| off the diagonal, 0 on it.
/// Entries with S_ij = 0 or theta_ij = 0 get a finite sentinel of 1e6 times
/// the largest finite entry (or 1e6 when no finite entry exists).
Matrix hierarchical_distance(const Matrix& S, const Matrix& theta, Index p, Index T);

enum class Linkage { Average, Weighted, Ward, Centroid, Median };

std::string to_string(Linkage l);
Linkage linkage_from_string(const std::string& s);
/// Average and weighted linkages produce nondecreasing merge heights.
bool is_monotone(Linkage l);

struct Merge {
  int a = 0;  // cluster ids: 0..p-1 are points, p+k is the k-th merge
  int b = 0;
  double height = 0.0;
  int size = 0;
};

struct Dendrogram {
  int num_points = 0;
  Linkage linkage = Linkage::Average;
  std::vector<Merge> merges;  // p - 1 entries in agglomeration order
};

/// Agglomerative clustering by the Lance-Williams recursion. Average and
/// weighted linkage work on `D`; Ward, centroid and median work on squared
/// Euclidean distances between the rows of `residuals` and report Euclidean
/// heights. Ties pick the lexicographically smallest active pair.
Dendrogram agglomerate(const Matrix& D, Linkage linkage, const Matrix& residuals);

/// Connected components of the merges whose height is strictly below L.
ClusterAssignment cut_dendrogram(const Dendrogram& d, double L);
/// Partition after the first `merges` agglomeration steps.
ClusterAssignment cut_dendrogram_after(const Dendrogram& d, int merges);

Mask mask_from_labels(const ClusterAssignment& a);
/// Throws DataError when an asset has no code.
Mask mask_from_classification(const ClassificationMap& classes,
                              const std::vector<std::string>& assets);
ClusterAssignment assignment_from_classification(const ClassificationMap& classes,
                                                 const std::vector<std::string>& assets);

enum class ClusterMethod { Hierarchical, KMeans };

struct HyperparameterOptions {
  ClusterMethod method = ClusterMethod::Hierarchical;
  Linkage linkage = Linkage::Average;
  CvOptions cv;
  KMeansOptions kmeans;
  /// Largest k-means cluster count on the grid; p when 0.
  int max_clusters = 0;
};

struct HyperparameterSelection {
  /// Number of clusters at the selected grid point.
  int clusters = 0;
  /// CSH: cut-off distance on the full-window dendrogram (merges strictly
  /// below it are applied). CSK: the selected M.
  double phi = 0.0;
  ClusterAssignment assignment;
  std::vector<double> grid;      // phi value per evaluated grid point
  std::vector<double> cv_error;  // mean validation error per evaluated point
  std::size_t evaluated = 0;
  bool stopped_early = false;
};

/// Mean over folds of ||S_train o C_train - S_test||_F^2, where C_train is
/// the clustering fitted on the fold's training residuals.
/// CSK walks M = 1, 2, ...; CSH walks the dendrogram from p singletons
/// towards one cluster, one merge per grid point. Early stopping follows
/// CvOptions. The argmin (ties toward more clusters) is refitted on the full
/// window.
HyperparameterSelection select_hyperparameter(const Matrix& residuals, const Matrix& S,
                                              const HyperparameterOptions& options);

}  // namespace blockcov
