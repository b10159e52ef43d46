#include "blockcov/config.hpp"

#include "blockcov/errors.hpp"

#include <fstream>
#include <set>

namespace blockcov {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

json cv_to_json(const CvOptions& cv) {
  return {{"folds", cv.folds},
          {"train_fraction", cv.train_fraction},
          {"patience", cv.patience},
          {"stagnation_tol", cv.stagnation_tol}};
}

CvOptions cv_from_json(const json& j, const std::string& where, CvOptions cv) {
  check_keys(j, where, {"folds", "train_fraction", "patience", "stagnation_tol"});
  read(j, "folds", cv.folds, where);
  read(j, "train_fraction", cv.train_fraction, where);
  read(j, "patience", cv.patience, where);
  read(j, "stagnation_tol", cv.stagnation_tol, where);
  return cv;
}

}  // namespace

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  estimator.validate();
  simulation.validate();
  if (!(nonzero_tol >= 0.0)) throw ConfigError("nonzero_tol must be nonnegative");
  for (Index p : sweep_p) {
    if (p < 2) throw ConfigError("sweep_p entries must be at least 2");
  }
  if (backtest.train_len < 3 || backtest.hold_len < 2) throw ConfigError("backtest: train_len >= 3 and hold_len >= 2");
  if (backtest.p < 2) throw ConfigError("backtest: p must be at least 2");
  if (!reference.empty()) method_from_string(reference);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["output_dir"] = output_dir;
  j["threads"] = threads;
  json ms = json::array();
  for (Method m : methods) ms.push_back(to_string(m));
  j["methods"] = ms;

  const auto& f = estimator.factors;
  j["factors"] = {{"K", f.fixed_K ? json(*f.fixed_K) : json(nullptr)},
                  {"max_K", f.max_K ? json(*f.max_K) : json(nullptr)},
                  {"spoet", f.spoet}};
  j["thresholding"] = {{"tau_min", estimator.tau_min},     {"tau_max", estimator.tau_max},
                       {"tau_count", estimator.tau_count}, {"al_exponent", estimator.al_exponent},
                       {"scad_a", estimator.scad_a},       {"cv", cv_to_json(estimator.threshold_cv)}};
  j["clustering"] = {{"linkage", to_string(estimator.linkage)},
                     {"kmeans_restarts", estimator.kmeans.restarts},
                     {"kmeans_max_iter", estimator.kmeans.max_iter},
                     {"kmeans_seed", estimator.kmeans.seed},
                     {"max_clusters", estimator.max_clusters},
                     {"csk_cv", cv_to_json(estimator.csk_cv)},
                     {"csh_cv", cv_to_json(estimator.csh_cv)}};
  j["shrinkage"] = {{"pd_floor", estimator.shrinkage.pd_floor}, {"paper_literal", estimator.shrinkage.lw.literal}};

  const auto& s = simulation;
  j["simulation"] = {{"p", s.p},
                     {"T", s.T},
                     {"K", s.K},
                     {"structure", s.structure == BlockStructure::Full ? "full" : "partial"},
                     {"M", s.M},
                     {"block_sizes", s.block_sizes == BlockSizes::Equal ? "equal" : "random"},
                     {"connect_prob", s.connect_prob},
                     {"taper", {{"const", s.taper.constant}, {"base", s.taper.base}, {"exponent", s.taper.exponent}}},
                     {"factor_variances", s.resolved_factor_variances()},
                     {"df", s.df},
                     {"reps", s.reps},
                     {"variance_range", {s.variance_lo, s.variance_hi}},
                     {"pervasiveness", s.pervasiveness},
                     {"use_true_K", use_true_K},
                     {"reference", reference},
                     {"nonzero_tol", nonzero_tol},
                     {"sweep_p", sweep_p}};
  j["backtest"] = {{"train_len", backtest.train_len}, {"hold_len", backtest.hold_len}, {"p", backtest.p}};
  j["estimate"] = {{"include_matrices", include_matrices}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  check_keys(j, "config", {"seed", "output_dir", "threads", "methods", "factors", "thresholding", "clustering",
                           "shrinkage", "simulation", "backtest", "estimate"});
  if (j.contains("seed") && !j.at("seed").is_null()) {
    std::uint64_t seed = 0;
    read(j, "seed", seed, "config");
    c.seed = seed;
  }
  read(j, "output_dir", c.output_dir, "config");
  read(j, "threads", c.threads, "config");
  if (j.contains("methods")) {
    std::vector<std::string> names;
    read(j, "methods", names, "config");
    c.methods.clear();
    for (const auto& n : names) c.methods.push_back(method_from_string(n));
  }

  if (j.contains("factors")) {
    const json& f = j.at("factors");
    check_keys(f, "factors", {"K", "max_K", "spoet"});
    if (f.contains("K") && !f.at("K").is_null()) {
      Index k = 0;
      read(f, "K", k, "factors");
      c.estimator.factors.fixed_K = k;
    }
    if (f.contains("max_K") && !f.at("max_K").is_null()) {
      Index k = 0;
      read(f, "max_K", k, "factors");
      c.estimator.factors.max_K = k;
    }
    read(f, "spoet", c.estimator.factors.spoet, "factors");
  }
  if (j.contains("thresholding")) {
    const json& t = j.at("thresholding");
    check_keys(t, "thresholding", {"tau_min", "tau_max", "tau_count", "al_exponent", "scad_a", "cv"});
    read(t, "tau_min", c.estimator.tau_min, "thresholding");
    read(t, "tau_max", c.estimator.tau_max, "thresholding");
    read(t, "tau_count", c.estimator.tau_count, "thresholding");
    read(t, "al_exponent", c.estimator.al_exponent, "thresholding");
    read(t, "scad_a", c.estimator.scad_a, "thresholding");
    if (t.contains("cv")) c.estimator.threshold_cv = cv_from_json(t.at("cv"), "thresholding.cv", c.estimator.threshold_cv);
  }
  if (j.contains("clustering")) {
    const json& k = j.at("clustering");
    check_keys(k, "clustering",
               {"linkage", "kmeans_restarts", "kmeans_max_iter", "kmeans_seed", "max_clusters", "csk_cv", "csh_cv"});
    if (k.contains("linkage")) {
      std::string l;
      read(k, "linkage", l, "clustering");
      c.estimator.linkage = linkage_from_string(l);
    }
    read(k, "kmeans_restarts", c.estimator.kmeans.restarts, "clustering");
    read(k, "kmeans_max_iter", c.estimator.kmeans.max_iter, "clustering");
    read(k, "kmeans_seed", c.estimator.kmeans.seed, "clustering");
    read(k, "max_clusters", c.estimator.max_clusters, "clustering");
    if (k.contains("csk_cv")) c.estimator.csk_cv = cv_from_json(k.at("csk_cv"), "clustering.csk_cv", c.estimator.csk_cv);
    if (k.contains("csh_cv")) c.estimator.csh_cv = cv_from_json(k.at("csh_cv"), "clustering.csh_cv", c.estimator.csh_cv);
  }
  if (j.contains("shrinkage")) {
    const json& s = j.at("shrinkage");
    check_keys(s, "shrinkage", {"pd_floor", "paper_literal"});
    read(s, "pd_floor", c.estimator.shrinkage.pd_floor, "shrinkage");
    read(s, "paper_literal", c.estimator.shrinkage.lw.literal, "shrinkage");
  }
  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    check_keys(s, "simulation",
               {"p", "T", "K", "structure", "M", "block_sizes", "connect_prob", "taper", "factor_variances", "df", "reps",
                "variance_range", "pervasiveness", "use_true_K", "reference", "nonzero_tol", "sweep_p"});
    auto& sp = c.simulation;
    read(s, "p", sp.p, "simulation");
    read(s, "T", sp.T, "simulation");
    read(s, "K", sp.K, "simulation");
    if (s.contains("structure")) {
      std::string st;
      read(s, "structure", st, "simulation");
      if (st == "full") sp.structure = BlockStructure::Full;
      else if (st == "partial") sp.structure = BlockStructure::Partial;
      else throw ConfigError("simulation.structure must be 'full' or 'partial'");
    }
    read(s, "M", sp.M, "simulation");
    if (s.contains("block_sizes")) {
      std::string bs;
      read(s, "block_sizes", bs, "simulation");
      if (bs == "random") sp.block_sizes = BlockSizes::Random;
      else if (bs == "equal") sp.block_sizes = BlockSizes::Equal;
      else throw ConfigError("simulation.block_sizes must be 'random' or 'equal'");
    }
    read(s, "connect_prob", sp.connect_prob, "simulation");
    if (s.contains("taper")) {
      const json& t = s.at("taper");
      check_keys(t, "simulation.taper", {"const", "base", "exponent"});
      read(t, "const", sp.taper.constant, "simulation.taper");
      read(t, "base", sp.taper.base, "simulation.taper");
      read(t, "exponent", sp.taper.exponent, "simulation.taper");
    }
    if (s.contains("factor_variances") && !s.at("factor_variances").is_null()) {
      read(s, "factor_variances", sp.factor_variances, "simulation");
    }
    read(s, "df", sp.df, "simulation");
    read(s, "reps", sp.reps, "simulation");
    if (s.contains("variance_range")) {
      std::vector<double> range;
      read(s, "variance_range", range, "simulation");
      if (range.size() != 2) throw ConfigError("simulation.variance_range needs two values");
      sp.variance_lo = range[0];
      sp.variance_hi = range[1];
    }
    read(s, "pervasiveness", sp.pervasiveness, "simulation");
    read(s, "use_true_K", c.use_true_K, "simulation");
    read(s, "reference", c.reference, "simulation");
    read(s, "nonzero_tol", c.nonzero_tol, "simulation");
    read(s, "sweep_p", c.sweep_p, "simulation");
  }
  if (j.contains("backtest")) {
    const json& b = j.at("backtest");
    check_keys(b, "backtest", {"train_len", "hold_len", "p"});
    read(b, "train_len", c.backtest.train_len, "backtest");
    read(b, "hold_len", c.backtest.hold_len, "backtest");
    read(b, "p", c.backtest.p, "backtest");
  }
  if (j.contains("estimate")) {
    const json& e = j.at("estimate");
    check_keys(e, "estimate", {"include_matrices"});
    read(e, "include_matrices", c.include_matrices, "estimate");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace blockcov
