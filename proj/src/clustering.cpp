#include "blockcov/clustering.hpp"

#include "blockcov/errors.hpp"
#include "blockcov/factor_core.hpp"
#include "blockcov/rng.hpp"
#include "blockcov/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace blockcov {

namespace {

/// Centred rows scaled to unit Euclidean norm.
Matrix standardize_rows(const Matrix& residuals) {
  Matrix z = center_rows(residuals);
  for (Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    if (!(norm > 0.0)) {
      throw DataError("residual series " + std::to_string(i) + " has zero variance");
    }
    z.row(i) /= norm;
  }
  return z;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

struct KMeansRun {
  std::vector<int> labels;
  double loss = 0.0;
  std::vector<double> trace;
};

KMeansRun kmeans_once(const Matrix& z, int M, int max_iter, std::mt19937_64& rng) {
  const Index p = z.rows();
  const Index T = z.cols();
  Matrix centroids(M, T);

  // k-means++ seeding with the correlation distance.
  std::vector<bool> chosen(static_cast<std::size_t>(p), false);
  std::uniform_int_distribution<Index> pick(0, p - 1);
  Index first = pick(rng);
  centroids.row(0) = z.row(first);
  chosen[static_cast<std::size_t>(first)] = true;
  Vector nearest = (1.0 - (z * z.row(first).transpose()).array()).cwiseMax(0.0).matrix();
  for (int m = 1; m < M; ++m) {
    std::vector<double> weights(static_cast<std::size_t>(p));
    double total = 0.0;
    for (Index i = 0; i < p; ++i) {
      const double w = chosen[static_cast<std::size_t>(i)] ? 0.0 : nearest(i) * nearest(i);
      weights[static_cast<std::size_t>(i)] = w;
      total += w;
    }
    Index next = 0;
    if (total > 0.0) {
      std::discrete_distribution<Index> dist(weights.begin(), weights.end());
      next = dist(rng);
    } else {
      std::vector<Index> free;
      for (Index i = 0; i < p; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) free.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> pick_free(0, free.size() - 1);
      next = free[pick_free(rng)];
    }
    chosen[static_cast<std::size_t>(next)] = true;
    centroids.row(m) = z.row(next);
    nearest = nearest.cwiseMin((1.0 - (z * z.row(next).transpose()).array()).cwiseMax(0.0).matrix());
  }

  KMeansRun run;
  run.labels.assign(static_cast<std::size_t>(p), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Matrix sim = z * centroids.transpose();  // p x M correlations
    bool changed = false;
    Vector own(p);
    std::vector<int> counts(static_cast<std::size_t>(M), 0);
    for (Index i = 0; i < p; ++i) {
      Index best = 0;
      sim.row(i).maxCoeff(&best);
      const int label = static_cast<int>(best);
      if (label != run.labels[static_cast<std::size_t>(i)]) changed = true;
      run.labels[static_cast<std::size_t>(i)] = label;
      own(i) = sim(i, best);
      ++counts[static_cast<std::size_t>(label)];
    }

    // Empty clusters take the point farthest from its centroid.
    for (int m = 0; m < M; ++m) {
      if (counts[static_cast<std::size_t>(m)] > 0) continue;
      Index far = -1;
      double worst = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < p; ++i) {
        const int l = run.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(l)] < 2) continue;
        const double d = 1.0 - own(i);
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      if (far < 0) break;
      --counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(far)])];
      run.labels[static_cast<std::size_t>(far)] = m;
      counts[static_cast<std::size_t>(m)] = 1;
      own(far) = 1.0;
      changed = true;
    }
    run.trace.push_back((1.0 - own.array()).sum());
    if (!changed && iter > 0) break;

    centroids.setZero();
    for (Index i = 0; i < p; ++i) centroids.row(run.labels[static_cast<std::size_t>(i)]) += z.row(i);
    for (int m = 0; m < M; ++m) {
      const double norm = centroids.row(m).norm();
      if (norm > 0.0) {
        centroids.row(m) /= norm;
      } else {
        // Members cancel exactly; fall back to the first member.
        for (Index i = 0; i < p; ++i) {
          if (run.labels[static_cast<std::size_t>(i)] == m) {
            centroids.row(m) = z.row(i);
            break;
          }
        }
      }
    }
  }

  const Matrix sim = z * centroids.transpose();
  run.loss = 0.0;
  for (Index i = 0; i < p; ++i) run.loss += 1.0 - sim(i, run.labels[static_cast<std::size_t>(i)]);
  return run;
}

double masked_error(const ClusterAssignment& a, const Matrix& s_train, const Matrix& s_test) {
  const Index p = s_train.rows();
  double err = 0.0;
  for (Index j = 0; j < p; ++j) {
    const int lj = a.labels[static_cast<std::size_t>(j)];
    for (Index i = 0; i < p; ++i) {
      const double v = a.labels[static_cast<std::size_t>(i)] == lj ? s_train(i, j) - s_test(i, j) : -s_test(i, j);
      err += v * v;
    }
  }
  return err;
}

}  // namespace

Matrix correlation_distance(const Matrix& residuals) {
  const Matrix z = standardize_rows(residuals);
  Matrix d = (1.0 - (z * z.transpose()).array()).matrix();
  d = 0.5 * (d + d.transpose()).eval();
  d = d.cwiseMax(0.0).cwiseMin(2.0);
  d.diagonal().setZero();
  return d;
}

KMeansResult kmeans(const Matrix& residuals, int M, const KMeansOptions& options) {
  const Index p = residuals.rows();
  if (M < 1 || M > p) throw ConfigError("kmeans: M must lie in [1, p]");
  if (options.restarts < 1 || options.max_iter < 1) throw ConfigError("kmeans: restarts and max_iter must be positive");
  const Matrix z = standardize_rows(residuals);

  KMeansRun best;
  best.loss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    std::mt19937_64 rng(derive_seed(options.seed, {static_cast<std::uint64_t>(r)}));
    KMeansRun run = kmeans_once(z, M, options.max_iter, rng);
    if (run.loss < best.loss) best = std::move(run);
  }
  KMeansResult out;
  out.assignment = ClusterAssignment::from_labels(best.labels);
  out.loss = best.loss;
  out.loss_trace = std::move(best.trace);
  return out;
}

Matrix hierarchical_distance(const Matrix& S, const Matrix& theta, Index p, Index T) {
  if (p < 2) throw ConfigError("hierarchical_distance: p must be at least 2");
  if (S.rows() != p || S.cols() != p || theta.rows() != p || theta.cols() != p) {
    throw ConfigError("hierarchical_distance: shape mismatch");
  }
  const double factor = std::log(static_cast<double>(p)) / static_cast<double>(T);
  Matrix D = Matrix::Zero(p, p);
  double largest = 0.0;
  std::vector<std::pair<Index, Index>> sentinel;
  for (Index j = 0; j < p; ++j) {
    for (Index i = j + 1; i < p; ++i) {
      const double s = std::abs(0.5 * (S(i, j) + S(j, i)));
      const double th = 0.5 * (theta(i, j) + theta(j, i));
      const double d = std::sqrt(std::max(th, 0.0) * factor) / s;
      if (s == 0.0 || !(th > 0.0) || !std::isfinite(d)) {
        sentinel.emplace_back(i, j);
        continue;
      }
      D(i, j) = d;
      D(j, i) = d;
      largest = std::max(largest, d);
    }
  }
  const double cap = largest > 0.0 ? 1e6 * largest : 1e6;
  for (auto [i, j] : sentinel) {
    D(i, j) = cap;
    D(j, i) = cap;
  }
  return D;
}

std::string to_string(Linkage l) {
  switch (l) {
    case Linkage::Average: return "average";
    case Linkage::Weighted: return "weighted";
    case Linkage::Ward: return "ward";
    case Linkage::Centroid: return "centroid";
    case Linkage::Median: return "median";
  }
  return "?";
}

Linkage linkage_from_string(const std::string& s) {
  static const std::map<std::string, Linkage> names = {{"average", Linkage::Average},
                                                       {"weighted", Linkage::Weighted},
                                                       {"ward", Linkage::Ward},
                                                       {"centroid", Linkage::Centroid},
                                                       {"median", Linkage::Median}};
  auto it = names.find(s);
  if (it == names.end()) throw ConfigError("unknown linkage '" + s + "'");
  return it->second;
}

bool is_monotone(Linkage l) { return l == Linkage::Average || l == Linkage::Weighted; }

Dendrogram agglomerate(const Matrix& D, Linkage linkage, const Matrix& residuals) {
  if (D.rows() != D.cols()) throw DataError("agglomerate: distance matrix is not square");
  const Index p = D.rows();
  Dendrogram out;
  out.num_points = static_cast<int>(p);
  out.linkage = linkage;
  if (p < 2) return out;

  const bool euclidean = !is_monotone(linkage);
  Matrix dist;
  if (euclidean) {
    if (residuals.rows() != p) throw DataError("agglomerate: residuals do not match the distance matrix");
    const Matrix gram = residuals * residuals.transpose();
    const Vector sq = gram.diagonal();
    dist = ((-2.0 * gram).colwise() + sq).rowwise() + sq.transpose();
    dist = dist.cwiseMax(0.0);
  } else {
    dist = 0.5 * (D + D.transpose());
  }

  std::vector<int> id(static_cast<std::size_t>(p));
  std::iota(id.begin(), id.end(), 0);
  std::vector<int> size(static_cast<std::size_t>(p), 1);
  std::vector<Index> active(static_cast<std::size_t>(p));
  std::iota(active.begin(), active.end(), Index{0});

  for (Index step = 0; step + 1 < p; ++step) {
    Index bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < active.size(); ++x) {
      const Index i = active[x];
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const Index j = active[y];
        const double d = dist(i, j);
        if (d < best || bi < 0) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    const double ni = size[static_cast<std::size_t>(bi)];
    const double nj = size[static_cast<std::size_t>(bj)];
    const double dij = dist(bi, bj);
    for (Index k : active) {
      if (k == bi || k == bj) continue;
      const double dki = dist(k, bi);
      const double dkj = dist(k, bj);
      const double nk = size[static_cast<std::size_t>(k)];
      double updated = 0.0;
      switch (linkage) {
        case Linkage::Average:
          updated = (ni * dki + nj * dkj) / (ni + nj);
          break;
        case Linkage::Weighted:
          updated = 0.5 * (dki + dkj);
          break;
        case Linkage::Ward:
          updated = ((nk + ni) * dki + (nk + nj) * dkj - nk * dij) / (ni + nj + nk);
          break;
        case Linkage::Centroid:
          updated = (ni * dki + nj * dkj) / (ni + nj) - ni * nj * dij / ((ni + nj) * (ni + nj));
          break;
        case Linkage::Median:
          updated = 0.5 * dki + 0.5 * dkj - 0.25 * dij;
          break;
      }
      if (euclidean) updated = std::max(updated, 0.0);
      dist(k, bi) = updated;
      dist(bi, k) = updated;
    }
    Merge m;
    m.a = std::min(id[static_cast<std::size_t>(bi)], id[static_cast<std::size_t>(bj)]);
    m.b = std::max(id[static_cast<std::size_t>(bi)], id[static_cast<std::size_t>(bj)]);
    m.height = euclidean ? std::sqrt(best) : best;
    m.size = static_cast<int>(ni + nj);
    out.merges.push_back(m);
    id[static_cast<std::size_t>(bi)] = static_cast<int>(p + step);
    size[static_cast<std::size_t>(bi)] = m.size;
    active.erase(std::find(active.begin(), active.end(), bj));
  }
  return out;
}

namespace {

ClusterAssignment components_of(const Dendrogram& d, const std::vector<bool>& applied) {
  const auto p = static_cast<std::size_t>(d.num_points);
  // A merge that applies pulls in everything below it.
  std::vector<bool> use = applied;
  for (std::size_t k = d.merges.size(); k-- > 0;) {
    if (!use[k]) continue;
    for (int child : {d.merges[k].a, d.merges[k].b}) {
      if (child >= d.num_points) use[static_cast<std::size_t>(child - d.num_points)] = true;
    }
  }
  std::vector<std::size_t> rep(p + d.merges.size());
  for (std::size_t i = 0; i < p; ++i) rep[i] = i;
  UnionFind uf(p);
  for (std::size_t k = 0; k < d.merges.size(); ++k) {
    const auto a = static_cast<std::size_t>(d.merges[k].a);
    const auto b = static_cast<std::size_t>(d.merges[k].b);
    rep[p + k] = rep[a];
    if (use[k]) uf.unite(rep[a], rep[b]);
  }
  std::vector<int> raw(p);
  for (std::size_t i = 0; i < p; ++i) raw[i] = static_cast<int>(uf.find(i));
  return ClusterAssignment::from_labels(raw);
}

}  // namespace

ClusterAssignment cut_dendrogram(const Dendrogram& d, double L) {
  if (!(L >= 0.0)) throw ConfigError("cut_dendrogram: L must be nonnegative");
  std::vector<bool> applied(d.merges.size());
  for (std::size_t k = 0; k < d.merges.size(); ++k) applied[k] = d.merges[k].height < L;
  return components_of(d, applied);
}

ClusterAssignment cut_dendrogram_after(const Dendrogram& d, int merges) {
  if (merges < 0 || merges > static_cast<int>(d.merges.size())) {
    throw ConfigError("cut_dendrogram_after: merge count out of range");
  }
  std::vector<bool> applied(d.merges.size(), false);
  for (int k = 0; k < merges; ++k) applied[static_cast<std::size_t>(k)] = true;
  return components_of(d, applied);
}

Mask mask_from_labels(const ClusterAssignment& a) { return Mask::from_assignment(a); }

ClusterAssignment assignment_from_classification(const ClassificationMap& classes,
                                                 const std::vector<std::string>& assets) {
  std::map<std::string, int> codes;
  std::vector<int> raw;
  for (const auto& asset : assets) {
    auto it = classes.find(asset);
    if (it == classes.end()) throw DataError("asset '" + asset + "' has no classification code");
    auto [c, inserted] = codes.emplace(it->second, static_cast<int>(codes.size()));
    raw.push_back(c->second);
  }
  return ClusterAssignment::from_labels(raw);
}

Mask mask_from_classification(const ClassificationMap& classes,
                              const std::vector<std::string>& assets) {
  return Mask::from_assignment(assignment_from_classification(classes, assets));
}

HyperparameterSelection select_hyperparameter(const Matrix& residuals, const Matrix& S,
                                              const HyperparameterOptions& options) {
  options.cv.validate();
  const Index p = residuals.rows();
  const Index T = residuals.cols();
  if (p < 2) throw ConfigError("select_hyperparameter: need at least 2 assets");
  const std::vector<Fold> folds = make_folds(T, options.cv);

  struct FoldData {
    Matrix train;  // centred training residuals
    Matrix s_train;
    Matrix s_test;
  };
  std::vector<FoldData> data;
  for (const Fold& f : folds) {
    FoldData d;
    d.train = center_rows(take_columns(residuals, f.train));
    d.s_train = sample_covariance(d.train);
    d.s_test = sample_covariance(take_columns(residuals, f.test));
    data.push_back(std::move(d));
  }

  HyperparameterSelection sel;
  EarlyStopping stopper(options.cv.patience, options.cv.stagnation_tol);

  if (options.method == ClusterMethod::KMeans) {
    const int max_m = options.max_clusters > 0 ? std::min<int>(options.max_clusters, static_cast<int>(p))
                                               : static_cast<int>(p);
    double best = std::numeric_limits<double>::infinity();
    int best_m = 1;
    for (int M = 1; M <= max_m; ++M) {
      double err = 0.0;
      for (std::size_t h = 0; h < data.size(); ++h) {
        KMeansOptions ko = options.kmeans;
        ko.seed = derive_seed(options.kmeans.seed, {static_cast<std::uint64_t>(h + 1), static_cast<std::uint64_t>(M)});
        const KMeansResult km = kmeans(data[h].train, M, ko);
        err += masked_error(km.assignment, data[h].s_train, data[h].s_test);
      }
      err /= static_cast<double>(data.size());
      sel.grid.push_back(M);
      sel.cv_error.push_back(err);
      if (err <= best) {  // ties toward more clusters
        best = err;
        best_m = M;
      }
      if (stopper.push(err) && M < max_m) {
        sel.stopped_early = true;
        break;
      }
    }
    KMeansOptions ko = options.kmeans;
    ko.seed = derive_seed(options.kmeans.seed, {0, static_cast<std::uint64_t>(best_m)});
    sel.assignment = kmeans(residuals, best_m, ko).assignment;
    sel.clusters = sel.assignment.num_clusters;
    sel.phi = best_m;
    sel.evaluated = sel.cv_error.size();
    return sel;
  }

  // Hierarchical: one dendrogram per fold, walked one merge at a time with
  // the validation error updated incrementally.
  const Dendrogram full = agglomerate(hierarchical_distance(S, theta_hat(residuals, S), p, T),
                                      options.linkage, center_rows(residuals));
  struct Walk {
    Dendrogram tree;
    std::vector<std::vector<Index>> members;
    double err = 0.0;
  };
  std::vector<Walk> walks;
  for (const FoldData& d : data) {
    Walk w;
    const Index t_train = d.train.cols();
    w.tree = agglomerate(hierarchical_distance(d.s_train, theta_hat(d.train, d.s_train), p, t_train),
                         options.linkage, d.train);
    w.members.resize(static_cast<std::size_t>(2 * p - 1));
    for (Index i = 0; i < p; ++i) w.members[static_cast<std::size_t>(i)] = {i};
    w.err = (d.s_test.array().square().sum() - d.s_test.diagonal().array().square().sum()) +
            (d.s_train.diagonal() - d.s_test.diagonal()).squaredNorm();
    walks.push_back(std::move(w));
  }

  auto phi_at = [&](int merges) {
    const auto n = static_cast<int>(full.merges.size());
    if (merges < n) return full.merges[static_cast<std::size_t>(merges)].height;
    return std::nextafter(full.merges.back().height, std::numeric_limits<double>::infinity());
  };

  const int steps = static_cast<int>(p) - 1;
  double best = std::numeric_limits<double>::infinity();
  int best_g = 0;
  for (int g = 0; g <= steps; ++g) {
    if (g > 0) {
      for (std::size_t h = 0; h < walks.size(); ++h) {
        Walk& w = walks[h];
        const Merge& m = w.tree.merges[static_cast<std::size_t>(g - 1)];
        auto& a = w.members[static_cast<std::size_t>(m.a)];
        auto& b = w.members[static_cast<std::size_t>(m.b)];
        double delta = 0.0;
        for (Index i : a) {
          for (Index j : b) {
            const double tr = data[h].s_train(i, j);
            const double te = data[h].s_test(i, j);
            delta += (tr - te) * (tr - te) - te * te;
          }
        }
        w.err += 2.0 * delta;
        auto& merged = w.members[static_cast<std::size_t>(p + g - 1)];
        merged.reserve(a.size() + b.size());
        merged.insert(merged.end(), a.begin(), a.end());
        merged.insert(merged.end(), b.begin(), b.end());
        a.clear();
        b.clear();
      }
    }
    double err = 0.0;
    for (const Walk& w : walks) err += w.err;
    err /= static_cast<double>(walks.size());
    sel.grid.push_back(phi_at(g));
    sel.cv_error.push_back(err);
    if (err < best) {  // ties toward more clusters (earlier in the walk)
      best = err;
      best_g = g;
    }
    if (stopper.push(err) && g < steps) {
      sel.stopped_early = true;
      break;
    }
  }
  sel.assignment = cut_dendrogram_after(full, best_g);
  sel.clusters = sel.assignment.num_clusters;
  sel.phi = phi_at(best_g);
  sel.evaluated = sel.cv_error.size();
  return sel;
}

}  // namespace blockcov
