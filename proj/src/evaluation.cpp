#include "blockcov/evaluation.hpp"

#include "blockcov/errors.hpp"
#include "blockcov/factor_core.hpp"
#include "blockcov/parallel.hpp"
#include "blockcov/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace blockcov {

double frobenius_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("frobenius_error: shape mismatch");
  return (a - b).norm();
}

ClassificationScores classification_metrics(const Matrix& psi_hat, const Matrix& psi_true, double tol) {
  if (psi_hat.rows() != psi_true.rows() || psi_hat.cols() != psi_true.cols() || psi_hat.rows() != psi_hat.cols()) {
    throw DataError("classification_metrics: shape mismatch");
  }
  if (!(tol >= 0.0)) throw ConfigError("classification_metrics: tol must be nonnegative");
  ClassificationScores s;
  auto& c = s.counts;
  const Index p = psi_hat.rows();
  for (Index j = 1; j < p; ++j) {
    for (Index i = 0; i < j; ++i) {
      const bool est = std::abs(psi_hat(i, j)) > tol;
      const bool truth = std::abs(psi_true(i, j)) > tol;
      if (est && truth) ++c.tp;
      else if (!est && !truth) ++c.tn;
      else if (est) ++c.fp;
      else ++c.fn;
    }
  }
  const auto d = [](std::int64_t x) { return static_cast<double>(x); };
  const std::int64_t total = c.tp + c.tn + c.fp + c.fn;
  s.accuracy = total > 0 ? d(c.tp + c.tn) / d(total) : 1.0;
  s.tp_rate = c.tp + c.fn > 0 ? d(c.tp) / d(c.tp + c.fn) : 1.0;
  s.tn_rate = c.tn + c.fp > 0 ? d(c.tn) / d(c.tn + c.fp) : 1.0;
  const double precision = c.tp + c.fp > 0 ? d(c.tp) / d(c.tp + c.fp) : (c.fn == 0 ? 1.0 : 0.0);
  s.f1 = precision + s.tp_rate > 0.0 ? 2.0 * precision * s.tp_rate / (precision + s.tp_rate) : 0.0;
  return s;
}

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DataError("rand_index: labelings differ in length");
  if (a.size() < 2) throw DataError("rand_index: need at least 2 items");
  // Pair counts from the contingency table, in exact integer arithmetic.
  std::map<std::pair<int, int>, std::int64_t> joint;
  std::map<int, std::int64_t> ca;
  std::map<int, std::int64_t> cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  auto pairs = [](std::int64_t n) { return n * (n - 1) / 2; };
  std::int64_t both = 0;
  std::int64_t same_a = 0;
  std::int64_t same_b = 0;
  for (const auto& [k, n] : joint) both += pairs(n);
  for (const auto& [k, n] : ca) same_a += pairs(n);
  for (const auto& [k, n] : cb) same_b += pairs(n);
  const std::int64_t total = pairs(static_cast<std::int64_t>(a.size()));
  const std::int64_t apart = total - same_a - same_b + both;
  return static_cast<double>(both + apart) / static_cast<double>(total);
}

double paired_sign_test(std::int64_t n_plus, std::int64_t n) {
  if (n < 0 || n_plus < 0 || n_plus > n) throw ConfigError("paired_sign_test: need 0 <= n_plus <= n");
  if (n_plus == 0) return 1.0;
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  const double log_n_fact = std::lgamma(static_cast<double>(n) + 1.0);
  std::vector<double> terms;
  for (std::int64_t k = n_plus; k <= n; ++k) {
    terms.push_back(log_n_fact - std::lgamma(static_cast<double>(k) + 1.0) -
                    std::lgamma(static_cast<double>(n - k) + 1.0) + log_half_n);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  return std::min(1.0, std::exp(top + std::log(sum)));
}

Vector gmv_weights(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) throw DataError("gmv_weights: need a square matrix");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("gmv_weights: covariance is not positive definite");
  const Vector x = llt.solve(Vector::Ones(sigma.rows()));
  const double total = x.sum();
  if (!(std::abs(total) > 0.0) || !x.allFinite()) throw NumericalError("gmv_weights: degenerate solution");
  return x / total;
}

double portfolio_risk(const Vector& w, const Matrix& sigma, bool annualize) {
  if (sigma.rows() != w.size() || sigma.cols() != w.size()) throw DataError("portfolio_risk: shape mismatch");
  double q = w.dot(sigma * w);
  if (q < -1e-12) throw NumericalError("portfolio_risk: evaluation matrix is not positive semidefinite");
  q = std::max(q, 0.0);
  return std::sqrt(q) * (annualize ? std::sqrt(252.0) : 1.0);
}

const std::vector<std::string>& simulation_measures() {
  static const std::vector<std::string> m = {"f1", "accuracy", "tp_rate", "tn_rate", "rand_index", "sigma_p",
                                             "frobenius"};
  return m;
}

bool higher_is_better(const std::string& measure) {
  return measure != "sigma_p" && measure != "frobenius";
}

namespace {

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(xs.size()));
  }
  return s;
}

nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"se", s.se}, {"n", s.n}};
}

struct RepOutcome {
  std::vector<std::optional<std::map<std::string, double>>> scores;  // per method
  std::vector<std::string> errors;                                   // per method
  std::vector<std::int64_t> clusters;                                // per method
  double oracle_sigma_p = 0.0;
  Index K_used = 0;
  Index K_bai_ng = 0;
  Index true_clusters = 0;
  std::string failure;  // whole-repetition failure
};

}  // namespace

Report run_simulation_study(const StudyOptions& options) {
  const SimulationSpec& spec = options.spec;
  spec.validate();
  options.estimator.validate();
  if (options.methods.empty()) throw ConfigError("simulation study needs at least one method");
  if (std::find(options.methods.begin(), options.methods.end(), Method::CSI) != options.methods.end()) {
    throw ConfigError("CSI needs a classification and cannot run on simulated data");
  }
  const std::string reference = options.reference.empty() ? to_string(options.methods.front()) : options.reference;
  const Method ref_method = method_from_string(reference);
  const auto ref_it = std::find(options.methods.begin(), options.methods.end(), ref_method);
  if (ref_it == options.methods.end()) throw ConfigError("sign-test reference " + reference + " is not a listed method");
  const auto ref_index = static_cast<std::size_t>(ref_it - options.methods.begin());

  const auto reps = static_cast<std::size_t>(spec.reps);
  const std::size_t nm = options.methods.size();
  std::vector<RepOutcome> outcomes(reps);

  parallel_for(reps, options.threads, [&](std::size_t r) {
    RepOutcome& out = outcomes[r];
    out.scores.resize(nm);
    out.errors.assign(nm, std::string());
    out.clusters.assign(nm, 0);
    try {
      const std::uint64_t rep_seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(r)});
      const PopulationModel model = generate_model(spec, derive_seed(rep_seed, {1}));
      const ReturnPanel panel = sample_panel(model, spec.T, spec.df, derive_seed(rep_seed, {2}));
      out.true_clusters = model.true_labels.num_clusters;
      out.oracle_sigma_p = portfolio_risk(gmv_weights(model.sigma), model.sigma, true);

      EstimatorConfig cfg = options.estimator;
      cfg.kmeans.seed = derive_seed(rep_seed, {3});
      out.K_bai_ng = estimate_num_factors(panel.values, cfg.factors.max_K.value_or(default_max_factors(spec.p, spec.T))).K;
      if (options.use_true_K) cfg.factors.fixed_K = spec.K;
      const FactorFit fit = fit_factors(panel, cfg.factors);
      out.K_used = fit.K;

      for (std::size_t m = 0; m < nm; ++m) {
        try {
          const CovarianceEstimate est = estimate_from_fit(fit, options.methods[m], cfg);
          const ClassificationScores cls = classification_metrics(est.psi, model.psi, options.nonzero_tol);
          std::map<std::string, double> s;
          s["f1"] = cls.f1;
          s["accuracy"] = cls.accuracy;
          s["tp_rate"] = cls.tp_rate;
          s["tn_rate"] = cls.tn_rate;
          s["rand_index"] = rand_index(est.assignment.labels, model.true_labels.labels);
          s["sigma_p"] = portfolio_risk(gmv_weights(est.sigma), model.sigma, true);
          s["frobenius"] = frobenius_error(est.sigma, model.sigma);
          out.scores[m] = std::move(s);
          out.clusters[m] = est.assignment.num_clusters;
        } catch (const std::exception& e) {
          out.errors[m] = e.what();
        }
      }
    } catch (const std::exception& e) {
      out.failure = e.what();
    }
  });

  Report report;
  report.tag = "SIMULATION";
  nlohmann::json& hp = report.hyperparameters;
  hp["p"] = spec.p;
  hp["T"] = spec.T;
  hp["K"] = spec.K;
  hp["structure"] = spec.structure == BlockStructure::Full ? "full" : "partial";
  hp["M"] = spec.M;
  hp["block_sizes"] = spec.block_sizes == BlockSizes::Equal ? "equal" : "random";
  hp["connect_prob"] = spec.connect_prob;
  hp["taper"] = {{"const", spec.taper.constant}, {"base", spec.taper.base}, {"exponent", spec.taper.exponent}};
  hp["factor_variances"] = spec.resolved_factor_variances();
  hp["df"] = spec.df;
  hp["reps"] = spec.reps;
  hp["seed"] = spec.seed;
  hp["use_true_K"] = options.use_true_K;
  hp["reference"] = reference;
  hp["linkage"] = to_string(options.estimator.linkage);
  nlohmann::json method_names = nlohmann::json::array();
  for (Method m : options.methods) method_names.push_back(to_string(m));
  hp["methods"] = method_names;

  // Per-repetition rows.
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  std::vector<double> oracle;
  std::vector<double> bai_ng;
  for (std::size_t r = 0; r < reps; ++r) {
    const RepOutcome& o = outcomes[r];
    if (!o.failure.empty()) {
      failures.push_back({{"rep", r}, {"method", nullptr}, {"error", o.failure}});
      continue;
    }
    oracle.push_back(o.oracle_sigma_p);
    bai_ng.push_back(static_cast<double>(o.K_bai_ng));
    for (std::size_t m = 0; m < nm; ++m) {
      if (!o.scores[m]) {
        failures.push_back({{"rep", r}, {"method", to_string(options.methods[m])}, {"error", o.errors[m]}});
        continue;
      }
      nlohmann::json row = {{"rep", r},
                            {"method", to_string(options.methods[m])},
                            {"K", o.K_used},
                            {"K_bai_ng", o.K_bai_ng},
                            {"clusters", o.clusters[m]},
                            {"true_clusters", o.true_clusters},
                            {"oracle_sigma_p", o.oracle_sigma_p}};
      for (const auto& [k, v] : *o.scores[m]) row[k] = v;
      rows.push_back(std::move(row));
    }
  }
  report.data["reps"] = rows;
  report.data["failures"] = failures;
  report.metrics["failed"] = static_cast<double>(failures.size());
  report.metrics["ORACLE.sigma_p.mean"] = summarize(oracle).mean;
  report.metrics["K_bai_ng.mean"] = summarize(bai_ng).mean;
  if (!bai_ng.empty()) {
    const auto hits = std::count(bai_ng.begin(), bai_ng.end(), static_cast<double>(spec.K));
    report.metrics["K_bai_ng.hit_rate"] = static_cast<double>(hits) / static_cast<double>(bai_ng.size());
  }

  nlohmann::json summary = nlohmann::json::object();
  for (std::size_t m = 0; m < nm; ++m) {
    const std::string name = to_string(options.methods[m]);
    nlohmann::json per = nlohmann::json::object();
    for (const auto& measure : simulation_measures()) {
      std::vector<double> xs;
      for (const auto& o : outcomes) {
        if (o.failure.empty() && o.scores[m]) xs.push_back(o.scores[m]->at(measure));
      }
      const Summary s = summarize(xs);
      per[measure] = summary_json(s);
      if (s.n > 0) report.metrics[name + "." + measure + ".mean"] = s.mean;
    }
    summary[name] = per;
  }
  report.data["summary"] = summary;

  // Sign tests: reference against every other method, repetitions where
  // both succeeded, ties dropped.
  nlohmann::json tests = nlohmann::json::array();
  for (std::size_t m = 0; m < nm; ++m) {
    if (m == ref_index) continue;
    for (const auto& measure : simulation_measures()) {
      std::int64_t n_plus = 0;
      std::int64_t n = 0;
      for (const auto& o : outcomes) {
        if (!o.failure.empty() || !o.scores[ref_index] || !o.scores[m]) continue;
        const double a = o.scores[ref_index]->at(measure);
        const double b = o.scores[m]->at(measure);
        if (a == b) continue;
        ++n;
        if (higher_is_better(measure) ? a > b : a < b) ++n_plus;
      }
      tests.push_back({{"reference", reference},
                       {"benchmark", to_string(options.methods[m])},
                       {"measure", measure},
                       {"n_plus", n_plus},
                       {"n", n},
                       {"p_value", paired_sign_test(n_plus, n)}});
    }
  }
  report.data["sign_tests"] = tests;
  report.validate();
  return report;
}

Index backtest_window_count(Index T, Index train_len, Index hold_len) {
  if (train_len < 1 || hold_len < 1) throw ConfigError("backtest: train_len and hold_len must be positive");
  if (T < train_len) return 0;
  return (T - train_len) / hold_len;
}

namespace {

// Market caps keyed by asset on `date`. Assets with a missing cap anywhere in
// [first, last] (dates present in the caps file) are left out.
std::map<std::string, double> caps_on(const MarketCapPanel& caps, const std::vector<std::string>& window_dates,
                                      const std::string& date) {
  std::map<std::string, Index> col_of;
  for (std::size_t c = 0; c < caps.times.size(); ++c) col_of[caps.times[c]] = static_cast<Index>(c);
  const auto at = col_of.find(date);
  if (at == col_of.end()) throw DataError("backtest: no market caps for date " + date);
  std::vector<Index> cols;
  for (const auto& d : window_dates) {
    const auto it = col_of.find(d);
    if (it != col_of.end()) cols.push_back(it->second);
  }
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < caps.assets.size(); ++i) {
    const auto row = static_cast<Index>(i);
    bool complete = true;
    for (Index c : cols) complete = complete && std::isfinite(caps.values(row, c));
    if (complete) out[caps.assets[i]] = caps.values(row, at->second);
  }
  return out;
}

struct WindowOutcome {
  std::string error;
  Index K = 0;
  std::vector<std::optional<double>> sigma_p;
  std::vector<std::optional<double>> ri;
  std::vector<std::int64_t> clusters;
  std::vector<std::string> errors;
};

}  // namespace

Report run_backtest(const ReturnPanel& panel, const MarketCapPanel& caps, const ClassificationMap& classes,
                    const BacktestOptions& options) {
  panel.validate();
  options.estimator.validate();
  if (options.methods.empty()) throw ConfigError("backtest needs at least one method");
  if (options.p < 2) throw ConfigError("backtest: p must be at least 2");
  const Index windows = backtest_window_count(panel.T(), options.train_len, options.hold_len);
  if (windows < 1) throw DataError("backtest: panel too short for a single window");
  const std::size_t nm = options.methods.size();
  std::vector<WindowOutcome> outcomes(static_cast<std::size_t>(windows));

  parallel_for(static_cast<std::size_t>(windows), options.threads, [&](std::size_t w) {
    WindowOutcome& out = outcomes[w];
    out.sigma_p.resize(nm);
    out.ri.resize(nm);
    out.clusters.assign(nm, 0);
    out.errors.assign(nm, std::string());
    try {
      const Index start = static_cast<Index>(w) * options.hold_len;
      const ReturnPanel window = panel.slice_time(start, options.train_len + options.hold_len);
      const std::string formation = window.times[static_cast<std::size_t>(options.train_len - 1)];
      const ReturnPanel universe = select_universe(window, caps_on(caps, window.times, formation), classes,
                                                   options.p, options.train_len, options.hold_len);
      const ReturnPanel train = universe.slice_time(0, options.train_len);
      const Matrix hold_cov = sample_covariance(universe.slice_time(options.train_len, options.hold_len).values);
      const ClusterAssignment industry = assignment_from_classification(classes, universe.assets);
      const FactorFit fit = fit_factors(train, options.estimator.factors);
      out.K = fit.K;
      for (std::size_t m = 0; m < nm; ++m) {
        try {
          const CovarianceEstimate est =
              estimate_from_fit(fit, options.methods[m], options.estimator, &train.assets, &classes);
          out.sigma_p[m] = portfolio_risk(gmv_weights(est.sigma), hold_cov, true);
          out.ri[m] = rand_index(est.assignment.labels, industry.labels);
          out.clusters[m] = est.assignment.num_clusters;
        } catch (const std::exception& e) {
          out.errors[m] = e.what();
        }
      }
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  Report report;
  report.tag = "BACKTEST";
  report.hyperparameters["train_len"] = options.train_len;
  report.hyperparameters["hold_len"] = options.hold_len;
  report.hyperparameters["p"] = options.p;
  nlohmann::json method_names = nlohmann::json::array();
  for (Method m : options.methods) method_names.push_back(to_string(m));
  report.hyperparameters["methods"] = method_names;
  report.metadata["windows"] = windows;

  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  std::vector<double> ks;
  std::vector<std::vector<double>> sig(nm);
  std::vector<std::vector<double>> ris(nm);
  for (std::size_t w = 0; w < outcomes.size(); ++w) {
    const WindowOutcome& o = outcomes[w];
    const Index start = static_cast<Index>(w) * options.hold_len;
    if (!o.error.empty()) {
      failures.push_back({{"window", w}, {"method", nullptr}, {"error", o.error}});
      continue;
    }
    ks.push_back(static_cast<double>(o.K));
    for (std::size_t m = 0; m < nm; ++m) {
      if (!o.sigma_p[m]) {
        failures.push_back({{"window", w}, {"method", to_string(options.methods[m])}, {"error", o.errors[m]}});
        continue;
      }
      sig[m].push_back(*o.sigma_p[m]);
      ris[m].push_back(*o.ri[m]);
      rows.push_back({{"window", w},
                      {"start", panel.times[static_cast<std::size_t>(start)]},
                      {"formation", panel.times[static_cast<std::size_t>(start + options.train_len - 1)]},
                      {"method", to_string(options.methods[m])},
                      {"K", o.K},
                      {"sigma_p", *o.sigma_p[m]},
                      {"rand_index_industry", *o.ri[m]},
                      {"clusters", o.clusters[m]}});
    }
  }
  report.data["windows"] = rows;
  report.data["failures"] = failures;
  report.metrics["failed"] = static_cast<double>(failures.size());
  if (!ks.empty()) {
    const Summary s = summarize(ks);
    report.metrics["K.mean"] = s.mean;
    report.metrics["K.min"] = *std::min_element(ks.begin(), ks.end());
    report.metrics["K.max"] = *std::max_element(ks.begin(), ks.end());
  }
  nlohmann::json summary = nlohmann::json::object();
  for (std::size_t m = 0; m < nm; ++m) {
    const std::string name = to_string(options.methods[m]);
    const Summary s = summarize(sig[m]);
    const Summary r = summarize(ris[m]);
    summary[name] = {{"sigma_p", summary_json(s)}, {"rand_index_industry", summary_json(r)}};
    if (s.n > 0) {
      report.metrics[name + ".sigma_p.mean"] = s.mean;
      report.metrics[name + ".rand_index_industry.mean"] = r.mean;
    }
  }
  report.data["summary"] = summary;
  report.validate();
  return report;
}

}  // namespace blockcov
