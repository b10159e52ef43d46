#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "blockcov/clustering.hpp"
#include "blockcov/errors.hpp"
#include "blockcov/factor_core.hpp"
#include "blockcov/rng.hpp"
#include "blockcov/thresholding.hpp"
#include "test_helpers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

using namespace blockcov;

namespace {

// Rows drawn around `groups` latent series.
Matrix grouped_rows(const std::vector<int>& group, Index T, double noise, std::uint64_t seed) {
  const int g = *std::max_element(group.begin(), group.end()) + 1;
  const Matrix f = testing::gaussian(g, T, seed);
  const Matrix e = testing::gaussian(static_cast<Index>(group.size()), T, seed + 1);
  Matrix out(static_cast<Index>(group.size()), T);
  for (std::size_t i = 0; i < group.size(); ++i) out.row(static_cast<Index>(i)) = f.row(group[i]) + noise * e.row(static_cast<Index>(i));
  return out;
}

double masked_error(const ClusterAssignment& a, const Matrix& tr, const Matrix& te) {
  const Matrix c = Mask::from_assignment(a).c;
  return (tr.cwiseProduct(c) - te).squaredNorm();
}

struct Cluster {
  std::vector<Index> members;
  Vector center;  // median linkage: weighted centre
};

// Closed-form cluster distances recomputed from scratch at every step.
double oracle_distance(const Cluster& a, const Cluster& b, Linkage l, const Matrix& D, const Matrix& x) {
  auto mean_of = [&](const Cluster& c) {
    Vector m = Vector::Zero(x.cols());
    for (Index i : c.members) m += x.row(i).transpose();
    return Vector(m / static_cast<double>(c.members.size()));
  };
  const double na = static_cast<double>(a.members.size()), nb = static_cast<double>(b.members.size());
  switch (l) {
    case Linkage::Average: {
      double s = 0;
      for (Index i : a.members)
        for (Index j : b.members) s += D(i, j);
      return s / (na * nb);
    }
    case Linkage::Ward:
      return std::sqrt(2.0 * na * nb / (na + nb)) * (mean_of(a) - mean_of(b)).norm();
    case Linkage::Centroid:
      return (mean_of(a) - mean_of(b)).norm();
    case Linkage::Median:
      return (a.center - b.center).norm();
    default:
      return 0;
  }
}

std::vector<Merge> oracle_agglomerate(const Matrix& D, Linkage l, const Matrix& x) {
  const Index p = D.rows();
  std::vector<Cluster> clusters;
  std::vector<int> ids;
  for (Index i = 0; i < p; ++i) {
    clusters.push_back({{i}, x.row(i).transpose()});
    ids.push_back(static_cast<int>(i));
  }
  std::vector<Merge> out;
  for (Index step = 0; step + 1 < p; ++step) {
    std::size_t ba = 0, bb = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double d = oracle_distance(clusters[a], clusters[b], l, D, x);
        if (d < best) {
          best = d;
          ba = a;
          bb = b;
        }
      }
    Merge m;
    m.a = std::min(ids[ba], ids[bb]);
    m.b = std::max(ids[ba], ids[bb]);
    m.height = best;
    m.size = static_cast<int>(clusters[ba].members.size() + clusters[bb].members.size());
    out.push_back(m);
    Cluster merged;
    merged.members = clusters[ba].members;
    merged.members.insert(merged.members.end(), clusters[bb].members.begin(), clusters[bb].members.end());
    std::sort(merged.members.begin(), merged.members.end());
    merged.center = 0.5 * (clusters[ba].center + clusters[bb].center);
    // Clusters stay ordered by smallest member, so the merged one takes slot ba.
    clusters[ba] = merged;
    ids[ba] = static_cast<int>(p + step);
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  return out;
}

}  // namespace

TEST_CASE("correlation distance matches the pairwise definition") {
  const Matrix r = testing::gaussian(6, 40, 2);
  const Matrix d = correlation_distance(r);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j) {
      const Vector a = r.row(i).transpose().array() - r.row(i).mean();
      const Vector b = r.row(j).transpose().array() - r.row(j).mean();
      const double corr = a.dot(b) / (a.norm() * b.norm());
      CHECK(d(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 - corr).epsilon(1e-12));
    }
  Matrix flat = r;
  flat.row(3).setConstant(2.0);
  CHECK_THROWS_AS(correlation_distance(flat), DataError);
}

TEST_CASE("k-means recovers well separated groups deterministically") {
  std::vector<int> group;
  for (int i = 0; i < 30; ++i) group.push_back(i % 3);
  const Matrix r = grouped_rows(group, 200, 0.3, 11);
  KMeansOptions ko;
  ko.seed = 5;
  const KMeansResult km = kmeans(r, 3, ko);
  CHECK(km.assignment.labels == ClusterAssignment::from_labels(group).labels);
  for (std::size_t k = 1; k < km.loss_trace.size(); ++k) CHECK(km.loss_trace[k] <= km.loss_trace[k - 1] + 1e-12);
  CHECK(km.loss == doctest::Approx(km.loss_trace.back()).epsilon(1e-9));
  const KMeansResult again = kmeans(r, 3, ko);
  CHECK(again.assignment.labels == km.assignment.labels);
  CHECK(again.loss == km.loss);
  CHECK(kmeans(r, 30, ko).assignment.num_clusters == 30);
  CHECK(kmeans(r, 1, ko).assignment.num_clusters == 1);
  CHECK_THROWS_AS(kmeans(r, 0, ko), ConfigError);
  CHECK_THROWS_AS(kmeans(r, 31, ko), ConfigError);
}

TEST_CASE("hierarchical distance and the sentinel") {
  const Matrix e = center_rows(testing::gaussian(4, 50, 8));
  Matrix S = sample_covariance(e);
  const Matrix th = theta_hat(e, S);
  S(0, 1) = S(1, 0) = 0.0;
  const Matrix D = hierarchical_distance(S, th, 4, 50);
  double largest = 0;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) {
      if (i == j) {
        CHECK(D(i, j) == 0.0);
        continue;
      }
      if ((i == 0 && j == 1) || (i == 1 && j == 0)) continue;
      const double expect = std::sqrt(th(i, j) * std::log(4.0) / 50) / std::abs(S(i, j));
      CHECK(D(i, j) == doctest::Approx(expect).epsilon(1e-12));
      largest = std::max(largest, expect);
    }
  CHECK(D(0, 1) == doctest::Approx(1e6 * largest));
  CHECK(std::isfinite(D(0, 1)));
}

TEST_CASE("hand-traced average linkage on five points") {
  const double xs[] = {0, 1, 3, 7, 15};
  Matrix D(5, 5);
  Matrix x(5, 1);
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = xs[i];
    for (int j = 0; j < 5; ++j) D(i, j) = std::abs(xs[i] - xs[j]);
  }
  const Dendrogram d = agglomerate(D, Linkage::Average, x);
  REQUIRE(d.merges.size() == 4);
  const int a[] = {0, 2, 3, 4}, b[] = {1, 5, 6, 7}, sz[] = {2, 3, 4, 5};
  const double h[] = {1.0, 2.5, 17.0 / 3.0, 12.25};
  for (int k = 0; k < 4; ++k) {
    CHECK(d.merges[k].a == a[k]);
    CHECK(d.merges[k].b == b[k]);
    CHECK(d.merges[k].size == sz[k]);
    CHECK(d.merges[k].height == doctest::Approx(h[k]));
  }
  CHECK(cut_dendrogram(d, 2.5).labels == std::vector<int>{0, 0, 1, 2, 3});
  CHECK(cut_dendrogram(d, 3.0).labels == std::vector<int>{0, 0, 0, 1, 2});
  CHECK(cut_dendrogram(d, 100).num_clusters == 1);
  CHECK(cut_dendrogram(d, 0.5).num_clusters == 5);
  CHECK(cut_dendrogram_after(d, 2).labels == std::vector<int>{0, 0, 0, 1, 2});
  CHECK_THROWS_AS(cut_dendrogram_after(d, 5), ConfigError);
}

TEST_CASE("agglomerate matches closed-form linkage distances") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Matrix x = testing::gaussian(9, 4, 100 + seed);
    Matrix D(9, 9);
    for (Index i = 0; i < 9; ++i)
      for (Index j = 0; j < 9; ++j) D(i, j) = (x.row(i) - x.row(j)).norm() + (i == j ? 0.0 : 0.01 * ((i * 7 + j * 7) % 5));
    for (Linkage l : {Linkage::Average, Linkage::Ward, Linkage::Centroid, Linkage::Median}) {
      CAPTURE(to_string(l));
      const Dendrogram d = agglomerate(D, l, x);
      const auto oracle = oracle_agglomerate(D, l, x);
      REQUIRE(d.merges.size() == oracle.size());
      for (std::size_t k = 0; k < oracle.size(); ++k) {
        CHECK(d.merges[k].a == oracle[k].a);
        CHECK(d.merges[k].b == oracle[k].b);
        CHECK(d.merges[k].size == oracle[k].size);
        CHECK(d.merges[k].height == doctest::Approx(oracle[k].height).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("weighted linkage and tie-breaking") {
  // Equidistant points: every pair ties, so the smallest slot pair wins.
  Matrix D = Matrix::Constant(4, 4, 1.0);
  D.diagonal().setZero();
  const Dendrogram d = agglomerate(D, Linkage::Weighted, Matrix::Zero(4, 1));
  CHECK(d.merges[0].a == 0);
  CHECK(d.merges[0].b == 1);
  CHECK(d.merges[1].a == 2);
  CHECK(d.merges[1].b == 4);
  CHECK(d.merges[2].a == 3);
  CHECK(d.merges[2].b == 5);
  // WPGMA: (d(k,a) + d(k,b)) / 2 regardless of sizes.
  Matrix E(3, 3);
  E << 0, 1, 4, 1, 0, 6, 4, 6, 0;
  const Dendrogram w = agglomerate(E, Linkage::Weighted, Matrix::Zero(3, 1));
  CHECK(w.merges[1].height == doctest::Approx(5.0));
  CHECK(is_monotone(Linkage::Average));
  CHECK_FALSE(is_monotone(Linkage::Centroid));
  CHECK(linkage_from_string("median") == Linkage::Median);
  CHECK_THROWS_AS(linkage_from_string("medoid"), ConfigError);
}

TEST_CASE("cut_dendrogram_after agrees with a union-find replay") {
  const Matrix x = testing::gaussian(15, 3, 77);
  const Dendrogram d = agglomerate(correlation_distance(testing::gaussian(15, 30, 78)), Linkage::Average, x);
  for (int g = 0; g <= 14; ++g) {
    std::vector<std::set<int>> sets(29);
    for (int i = 0; i < 15; ++i) sets[i] = {i};
    std::vector<int> label(15);
    std::iota(label.begin(), label.end(), 0);
    for (int k = 0; k < g; ++k) {
      const auto& m = d.merges[k];
      sets[15 + k] = sets[m.a];
      sets[15 + k].insert(sets[m.b].begin(), sets[m.b].end());
      const int root = *sets[15 + k].begin();
      for (int i : sets[15 + k]) label[i] = root;
    }
    const ClusterAssignment cut = cut_dendrogram_after(d, g);
    CHECK(cut.labels == ClusterAssignment::from_labels(label).labels);
    CHECK(cut.num_clusters == 15 - g);
  }
}

TEST_CASE("classification masks") {
  const ClassificationMap classes{{"A", "10"}, {"B", "20"}, {"C", "10"}};
  const Mask m = mask_from_classification(classes, {"A", "B", "C"});
  Matrix expect(3, 3);
  expect << 1, 0, 1, 0, 1, 0, 1, 0, 1;
  CHECK(m.c == expect);
  CHECK(m.is_equivalence());
  CHECK_THROWS_AS(mask_from_classification(classes, {"A", "Z"}), DataError);
}

TEST_CASE("CSH cross-validation errors equal direct per-fold recomputation") {
  std::vector<int> group;
  for (int i = 0; i < 12; ++i) group.push_back(i / 4);
  const Matrix r = grouped_rows(group, 90, 1.0, 31);
  const Matrix S = sample_covariance(r);
  HyperparameterOptions opt;
  opt.cv.patience = 1000;
  opt.cv.stagnation_tol = 0;
  const auto folds = make_folds(90, opt.cv);
  for (Linkage l : {Linkage::Average, Linkage::Ward}) {
    opt.linkage = l;
    const auto sel = select_hyperparameter(r, S, opt);
    REQUIRE(sel.cv_error.size() == 12);
    CHECK_FALSE(sel.stopped_early);
    std::vector<Dendrogram> trees;
    std::vector<Matrix> trains, tests;
    for (const auto& f : folds) {
      const Matrix tr = center_rows(take_columns(r, f.train));
      const Matrix s_tr = sample_covariance(tr);
      trains.push_back(s_tr);
      tests.push_back(sample_covariance(take_columns(r, f.test)));
      trees.push_back(agglomerate(hierarchical_distance(s_tr, theta_hat(tr, s_tr), 12, tr.cols()), l, tr));
    }
    std::size_t argmin = 0;
    for (int g = 0; g < 12; ++g) {
      double err = 0;
      for (std::size_t h = 0; h < folds.size(); ++h) err += masked_error(cut_dendrogram_after(trees[h], g), trains[h], tests[h]);
      err /= static_cast<double>(folds.size());
      CHECK(sel.cv_error[g] == doctest::Approx(err).epsilon(1e-9));
      if (sel.cv_error[g] < sel.cv_error[argmin]) argmin = g;
    }
    const Dendrogram full = agglomerate(hierarchical_distance(S, theta_hat(r, S), 12, 90), l, center_rows(r));
    CHECK(sel.assignment.labels == cut_dendrogram_after(full, static_cast<int>(argmin)).labels);
    CHECK(sel.clusters == sel.assignment.num_clusters);
  }
}

TEST_CASE("CSK cross-validation errors and the refit") {
  std::vector<int> group;
  for (int i = 0; i < 24; ++i) group.push_back(i % 4);
  const Matrix r = grouped_rows(group, 150, 0.5, 53);
  const Matrix S = sample_covariance(r);
  HyperparameterOptions opt;
  opt.method = ClusterMethod::KMeans;
  opt.kmeans.seed = 9;
  opt.max_clusters = 8;
  const auto sel = select_hyperparameter(r, S, opt);
  const auto folds = make_folds(150, opt.cv);
  for (std::size_t k = 0; k < sel.cv_error.size(); ++k) {
    const int M = static_cast<int>(k) + 1;
    double err = 0;
    for (std::size_t h = 0; h < folds.size(); ++h) {
      const Matrix tr = center_rows(take_columns(r, folds[h].train));
      KMeansOptions ko = opt.kmeans;
      ko.seed = derive_seed(9, {h + 1, static_cast<std::uint64_t>(M)});
      err += masked_error(kmeans(tr, M, ko).assignment, sample_covariance(tr), sample_covariance(take_columns(r, folds[h].test)));
    }
    CHECK(sel.cv_error[k] == doctest::Approx(err / static_cast<double>(folds.size())).epsilon(1e-9));
  }
  // The full-window refit uses the argmin of the curve (ties toward larger M).
  std::size_t best = 0;
  for (std::size_t k = 0; k < sel.cv_error.size(); ++k)
    if (sel.cv_error[k] <= sel.cv_error[best]) best = k;
  CHECK(sel.phi == static_cast<double>(best + 1));
  KMeansOptions ko = opt.kmeans;
  ko.seed = derive_seed(9, {0, best + 1});
  CHECK(sel.assignment.labels == kmeans(r, static_cast<int>(best) + 1, ko).assignment.labels);
}
