#include "blockcov/types.hpp"

#include "blockcov/errors.hpp"

#include <map>

namespace blockcov {

ClusterAssignment ClusterAssignment::from_labels(const std::vector<int>& raw) {
  ClusterAssignment a;
  std::map<int, int> remap;
  a.labels.reserve(raw.size());
  for (int r : raw) {
    auto [it, inserted] = remap.emplace(r, static_cast<int>(remap.size()));
    if (inserted) a.sizes.push_back(0);
    a.labels.push_back(it->second);
    ++a.sizes[static_cast<std::size_t>(it->second)];
  }
  a.num_clusters = static_cast<int>(remap.size());
  return a;
}

ClusterAssignment ClusterAssignment::singletons(std::size_t p) {
  std::vector<int> raw(p);
  for (std::size_t i = 0; i < p; ++i) raw[i] = static_cast<int>(i);
  return from_labels(raw);
}

ClusterAssignment ClusterAssignment::single_cluster(std::size_t p) {
  return from_labels(std::vector<int>(p, 0));
}

std::vector<std::vector<Index>> ClusterAssignment::members() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(num_clusters));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  }
  return out;
}

Mask Mask::from_assignment(const ClusterAssignment& a) {
  const auto p = static_cast<Index>(a.size());
  Mask m;
  m.c.resize(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < p; ++i) {
      m.c(i, j) = a.labels[static_cast<std::size_t>(i)] == a.labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    }
  }
  return m;
}

bool Mask::is_equivalence() const {
  const Index p = c.rows();
  if (c.cols() != p) return false;
  // Label every row by the first column it shares a 1 with, then compare.
  std::vector<int> raw(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    Index first = 0;
    while (first < p && c(i, first) != 1.0) ++first;
    if (first == p) return false;
    raw[static_cast<std::size_t>(i)] = static_cast<int>(first);
  }
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < p; ++i) {
      const double v = c(i, j);
      if (v != 0.0 && v != 1.0) return false;
      const bool same = raw[static_cast<std::size_t>(i)] == raw[static_cast<std::size_t>(j)];
      if (same != (v == 1.0)) return false;
    }
  }
  return true;
}

ClusterAssignment Mask::to_assignment() const {
  if (!is_equivalence()) throw DataError("mask is not an equivalence-relation matrix");
  const Index p = c.rows();
  std::vector<int> raw(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    Index first = 0;
    while (c(i, first) != 1.0) ++first;
    raw[static_cast<std::size_t>(i)] = static_cast<int>(first);
  }
  return ClusterAssignment::from_labels(raw);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::CSH: return "CSH";
    case Method::CSK: return "CSK";
    case Method::CSI: return "CSI";
    case Method::SOFT: return "SOFT";
    case Method::AL: return "AL";
    case Method::SCAD: return "SCAD";
    case Method::HARD: return "HARD";
    case Method::DIAG: return "DIAG";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  static const std::map<std::string, Method> names = {
      {"CSH", Method::CSH},   {"CSK", Method::CSK}, {"CSI", Method::CSI},   {"SOFT", Method::SOFT},
      {"AL", Method::AL},     {"SCAD", Method::SCAD}, {"HARD", Method::HARD}, {"DIAG", Method::DIAG}};
  auto it = names.find(s);
  if (it == names.end()) throw ConfigError("unknown estimator '" + s + "'");
  return it->second;
}

bool is_clustering_method(Method m) {
  return m == Method::CSH || m == Method::CSK || m == Method::CSI;
}

bool is_thresholding_method(Method m) {
  return m == Method::SOFT || m == Method::AL || m == Method::SCAD || m == Method::HARD;
}

}  // namespace blockcov
