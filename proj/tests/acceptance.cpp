// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
#include "blockcov/cli.hpp"
#include "blockcov/errors.hpp"
#include "blockcov/estimators.hpp"
#include "blockcov/evaluation.hpp"
#include "blockcov/simulation.hpp"
#include "blockcov/thresholding.hpp"
#include "test_helpers.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace blockcov;
namespace fs = std::filesystem;

namespace {

constexpr double kLwTol = 1e-10;
constexpr double kGmvTol = 1e-8;
constexpr double kPdRuntimeSec = 300;
constexpr double kFullRuntimeSec = 1800;
constexpr int kThreads = 8;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Per-rep values of one measure for one method, keyed by repetition.
std::map<int, double> per_rep(const Report& r, const std::string& method, const std::string& measure) {
  std::map<int, double> out;
  for (const auto& row : r.data.at("reps")) {
    if (row.at("method") == method) out[row.at("rep").get<int>()] = row.at(measure).get<double>();
  }
  return out;
}

double mean_of(const Report& r, const std::string& method, const std::string& measure) {
  return r.data.at("summary").at(method).at(measure).at("mean").get<double>();
}

double se_of(const Report& r, const std::string& method, const std::string& measure) {
  return r.data.at("summary").at(method).at(measure).at("se").get<double>();
}

SimulationSpec table_spec(BlockStructure s, std::uint64_t seed) {
  SimulationSpec spec;  // p = 300, T = 250, K = 5, M = 10, taper (0.3, 0.9, 0.1)
  spec.structure = s;
  spec.block_sizes = BlockSizes::Equal;
  spec.reps = 25;
  spec.seed = seed;
  return spec;
}

Report study(const SimulationSpec& spec, std::vector<Method> methods, Linkage linkage = Linkage::Average) {
  StudyOptions o;
  o.spec = spec;
  o.methods = std::move(methods);
  o.estimator.linkage = linkage;
  o.threads = kThreads;
  return run_simulation_study(o);
}

// 1. Positive definiteness of the block estimators.
Outcome pd_guarantee() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  int checked = 0, failed = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int c = 0; c < 200; ++c) {
    SimulationSpec spec;
    spec.p = 20 + static_cast<Index>(gen() % 131);
    spec.T = 60 + static_cast<Index>(gen() % 141);
    spec.K = static_cast<Index>(gen() % 4);
    spec.structure = gen() % 2 ? BlockStructure::Full : BlockStructure::Partial;
    spec.M = 1 + static_cast<Index>(gen() % 6);  // few blocks: many exceed T
    spec.connect_prob = 0.3 + 0.7 * std::uniform_real_distribution<double>()(gen);
    const std::uint64_t seed = gen();
    const PopulationModel model = generate_model(spec, seed);
    const ReturnPanel panel = sample_panel(model, spec.T, 5.0, seed + 1);
    ClassificationMap classes;
    const int groups = 1 + static_cast<int>(gen() % 4);
    for (std::size_t i = 0; i < panel.assets.size(); ++i) classes[panel.assets[i]] = std::to_string(i % groups);
    EstimatorConfig cfg;
    cfg.factors.fixed_K = spec.K;
    cfg.kmeans.seed = seed;
    cfg.kmeans.restarts = 3;
    cfg.max_clusters = 20;
    const FactorFit fit = fit_factors(panel, cfg.factors);
    for (Method m : {Method::CSH, Method::CSK, Method::CSI}) {
      ++checked;
      try {
        const CovarianceEstimate est = estimate_from_fit(fit, m, cfg, &panel.assets, &classes);
        worst = std::min(worst, est.min_eigenvalue / est.sigma.diagonal().mean());
        if (!(est.min_eigenvalue > 0.0)) ++failed;
      } catch (const std::exception& e) {
        ++failed;
        std::fprintf(stderr, "config %d %s: %s\n", c, to_string(m).c_str(), e.what());
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < kPdRuntimeSec,
          std::to_string(checked) + " estimates, " + std::to_string(failed) + " not PD, min relative eigenvalue " +
              fmt("%.3g", worst) + ", " + fmt("%.0f", secs) + " s (limit 300 s)"};
}

// 2. Thresholding axioms.
Outcome operator_axioms() {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> zd(-10, 10), td(0, 5), ad(0.01, 10), sd(2.001, 10);
  long violations = 0;
  for (int n = 0; n < 100000; ++n) {
    const double z = zd(gen), tau = td(gen);
    const ThresholdRule rules[] = {ThresholdRule::hard(), ThresholdRule::soft(), ThresholdRule::adaptive_lasso(0, ad(gen)),
                                   ThresholdRule::scad(0, sd(gen))};
    for (const auto& r : rules) {
      const double f = apply_operator(r, z, tau);
      if (std::abs(f) > std::abs(z)) ++violations;
      if (std::abs(z) <= tau && f != 0.0) ++violations;
      if (std::abs(f - z) > tau) ++violations;
    }
  }
  return {violations == 0, "4 x 100000 triples, " + std::to_string(violations) + " violations"};
}

// 3. Ledoit-Wolf quantities against a direct implementation of the published formulas.
Outcome lw_oracle() {
  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Index n = 6, T = 120;
    Matrix x = testing::gaussian(n, T, 900 + s);
    const Matrix f = testing::gaussian(1, T, 950 + s);
    for (Index i = 0; i < n; ++i) x.row(i) = (0.5 + 0.3 * static_cast<double>(i)) * (x.row(i) + 0.8 * f);
    // Oracle: centred data, 1/T moments, loops over (i, j, t).
    Matrix y = x;
    for (Index i = 0; i < n; ++i) y.row(i).array() -= x.row(i).mean();
    Matrix S = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        for (Index t = 0; t < T; ++t) S(i, j) += y(i, t) * y(j, t);
        S(i, j) /= static_cast<double>(T - 1);
      }
    double rbar = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j) rbar += S(i, j) / std::sqrt(S(i, i) * S(j, j));
    rbar /= static_cast<double>(n * (n - 1));
    double pi = 0, rho = 0, gamma = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        double pij = 0, tii = 0, tjj = 0;
        for (Index t = 0; t < T; ++t) {
          const double d = y(i, t) * y(j, t) - S(i, j);
          pij += d * d;
          tii += (y(i, t) * y(i, t) - S(i, i)) * d;
          tjj += (y(j, t) * y(j, t) - S(j, j)) * d;
        }
        pij /= static_cast<double>(T);
        tii /= static_cast<double>(T);
        tjj /= static_cast<double>(T);
        pi += pij;
        if (i == j) {
          rho += pij;
        } else {
          rho += rbar / 2 * (std::sqrt(S(j, j) / S(i, i)) * tii + std::sqrt(S(i, i) / S(j, j)) * tjj);
          gamma += std::pow(rbar * std::sqrt(S(i, i) * S(j, j)) - S(i, j), 2);
        }
      }
    const double kappa = (pi - rho) / gamma;
    const double weight = std::max(0.0, std::min(kappa / static_cast<double>(T), 1.0));
    const Matrix Sb = sample_covariance(x);
    const LwIntensity lw = lw_intensity(x, Sb, constant_correlation_target(Sb));
    worst = std::max({worst, std::abs(lw.pi - pi) / std::abs(pi), std::abs(lw.rho - rho) / std::max(1.0, std::abs(rho)),
                      std::abs(lw.gamma - gamma) / gamma, std::abs(lw.alpha - (1.0 - weight))});
  }
  return {worst <= kLwTol, "20 random 6x120 blocks, max relative deviation " + fmt("%.2e", worst) + " (tol 1e-10)"};
}

// 4. Full block-diagonal case.
Outcome full_case(Report* keep) {
  const auto t0 = Clock::now();
  const Report r = study(table_spec(BlockStructure::Full, 404), {Method::CSK, Method::CSH, Method::SOFT, Method::AL, Method::SCAD});
  const double secs = seconds_since(t0);
  *keep = r;
  const double ri = mean_of(r, "CSK", "rand_index"), f1 = mean_of(r, "CSK", "f1");
  const auto csk = per_rep(r, "CSK", "sigma_p");
  const auto soft = per_rep(r, "SOFT", "sigma_p"), al = per_rep(r, "AL", "sigma_p"), scad = per_rep(r, "SCAD", "sigma_p");
  int wins = 0;
  for (const auto& [rep, v] : csk) {
    if (soft.count(rep) && al.count(rep) && scad.count(rep) && v < soft.at(rep) && v < al.at(rep) && v < scad.at(rep)) ++wins;
  }
  const bool pass = ri >= 0.99 && f1 >= 0.98 && wins >= 20 && secs < kFullRuntimeSec && r.metrics.at("failed") == 0;
  return {pass, "CSK RI " + fmt("%.5f", ri) + " (>= 0.99), F1 " + fmt("%.5f", f1) + " (>= 0.98), sigma_p wins " +
                    std::to_string(wins) + "/25 (>= 20); sigma_p CSK/SOFT/AL/SCAD " + fmt("%.4f", mean_of(r, "CSK", "sigma_p")) +
                    "/" + fmt("%.4f", mean_of(r, "SOFT", "sigma_p")) + "/" + fmt("%.4f", mean_of(r, "AL", "sigma_p")) + "/" +
                    fmt("%.4f", mean_of(r, "SCAD", "sigma_p")) + ", " + fmt("%.0f", secs) + " s"};
}

// 5. Partial block-diagonal case.
Outcome partial_case() {
  const Report r = study(table_spec(BlockStructure::Partial, 505), {Method::CSH, Method::CSK, Method::SOFT, Method::AL, Method::SCAD});
  const double csh = mean_of(r, "CSH", "f1");
  double best_thr = 0;
  std::string detail = "CSH F1 " + fmt("%.4f", csh);
  for (const char* m : {"SOFT", "AL", "SCAD"}) {
    best_thr = std::max(best_thr, mean_of(r, m, "f1"));
    detail += std::string(", ") + m + " " + fmt("%.4f", mean_of(r, m, "f1"));
  }
  double p_scad = 1;
  for (const auto& t : r.data.at("sign_tests")) {
    if (t.at("benchmark") == "SCAD" && t.at("measure") == "f1") p_scad = t.at("p_value").get<double>();
  }
  detail += "; margin " + fmt("%.4f", csh - best_thr) + " (>= 0.10), sign test vs SCAD p = " + fmt("%.3g", p_scad) + " (< 0.05)";
  return {csh - best_thr >= 0.10 && p_scad < 0.05, detail};
}

// 6. Linkage ordering on the partial case.
Outcome linkage_order() {
  const SimulationSpec spec = table_spec(BlockStructure::Partial, 606);
  std::map<Linkage, std::pair<double, double>> f1;
  for (Linkage l : {Linkage::Average, Linkage::Weighted, Linkage::Ward, Linkage::Centroid, Linkage::Median}) {
    const Report r = study(spec, {Method::CSH}, l);
    f1[l] = {mean_of(r, "CSH", "f1"), se_of(r, "CSH", "f1")};
  }
  // a >= b holds when a + max(se_a, se_b) >= b.
  auto geq = [&](Linkage a, Linkage b) {
    return f1[a].first + std::max(f1[a].second, f1[b].second) >= f1[b].first;
  };
  bool pass = geq(Linkage::Average, Linkage::Weighted);
  for (Linkage l : {Linkage::Ward, Linkage::Centroid, Linkage::Median}) pass = pass && geq(Linkage::Weighted, l);
  std::string detail = "F1";
  for (const auto& [l, v] : f1) detail += " " + to_string(l) + " " + fmt("%.4f", v.first) + "+-" + fmt("%.4f", v.second);
  return {pass, detail};
}

// 7. Portfolio risk across dimensions.
Outcome dimension_trend(const Report& full300) {
  bool pass = true;
  double prev_gap = -std::numeric_limits<double>::infinity();
  std::string detail;
  for (Index p : {100, 200, 300}) {
    SimulationSpec spec = table_spec(BlockStructure::Full, 404);
    spec.p = p;
    const Report r = p == 300 ? full300 : study(spec, {Method::CSK, Method::CSH, Method::SOFT, Method::AL, Method::SCAD});
    const double worst_cluster = std::max(mean_of(r, "CSH", "sigma_p"), mean_of(r, "CSK", "sigma_p"));
    const double best_thr = std::min({mean_of(r, "SOFT", "sigma_p"), mean_of(r, "AL", "sigma_p"), mean_of(r, "SCAD", "sigma_p")});
    const double gap = mean_of(r, "SCAD", "sigma_p") - mean_of(r, "CSH", "sigma_p");
    pass = pass && worst_cluster < best_thr && gap >= prev_gap;
    prev_gap = gap;
    detail += "p=" + std::to_string(p) + ": CSH " + fmt("%.4f", mean_of(r, "CSH", "sigma_p")) + " CSK " +
              fmt("%.4f", mean_of(r, "CSK", "sigma_p")) + " best thr " + fmt("%.4f", best_thr) + " gap " + fmt("%.4f", gap) + "; ";
  }
  return {pass, detail};
}

// 8. Bai-Ng factor count on the full case.
Outcome bai_ng() {
  SimulationSpec spec = table_spec(BlockStructure::Full, 808);
  spec.reps = 50;
  const Report r = study(spec, {Method::DIAG});
  const double hit = r.metrics.at("K_bai_ng.hit_rate");
  return {hit >= 0.90, "K_hat = 5 in " + fmt("%.0f", hit * 100) + "% of 50 reps (>= 90%), mean K_hat " +
                           fmt("%.2f", r.metrics.at("K_bai_ng.mean"))};
}

// 9. Metric oracles.
Outcome metric_oracles() {
  std::mt19937_64 gen(99);
  int ri_bad = 0;
  for (int n = 0; n < 500; ++n) {
    const int len = 2 + static_cast<int>(gen() % 29);
    const int ka = 1 + static_cast<int>(gen() % 8), kb = 1 + static_cast<int>(gen() % 8);
    std::vector<int> a(len), b(len);
    for (int i = 0; i < len; ++i) {
      a[i] = static_cast<int>(gen() % ka);
      b[i] = static_cast<int>(gen() % kb);
    }
    long agree = 0, total = 0;
    for (int i = 0; i < len; ++i)
      for (int j = i + 1; j < len; ++j) {
        ++total;
        agree += (a[i] == a[j]) == (b[i] == b[j]);
      }
    if (rand_index(a, b) != static_cast<double>(agree) / static_cast<double>(total)) ++ri_bad;
  }
  double sign_worst = 0;
  for (std::int64_t n = 0; n <= 30; ++n)
    for (std::int64_t np = 0; np <= n; ++np) {
      std::uint64_t num = 0;
      for (std::int64_t k = np; k <= n; ++k) {
        std::uint64_t c = 1;
        for (std::int64_t j = 1; j <= k; ++j) c = c * static_cast<std::uint64_t>(n - k + j) / static_cast<std::uint64_t>(j);
        num += c;
      }
      const double exact = static_cast<double>(num) / std::ldexp(1.0, static_cast<int>(n));
      sign_worst = std::max(sign_worst, std::abs(paired_sign_test(np, n) - exact) / exact);
    }
  double gmv_worst = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Matrix sigma = testing::random_spd(10, 3000 + s, 0.2);
    Vector w = Vector::Constant(10, 0.1);
    const double step = 0.5 / sigma.operatorNorm();
    for (int it = 0; it < 500000; ++it) {
      Vector g = 2.0 * sigma * w;
      g.array() -= g.mean();
      if (g.norm() < 1e-15) break;
      w -= step * g;
    }
    gmv_worst = std::max(gmv_worst, (gmv_weights(sigma) - w).cwiseAbs().maxCoeff());
  }
  const bool pass = ri_bad == 0 && sign_worst < 1e-12 && gmv_worst < kGmvTol;
  return {pass, "rand_index mismatches " + std::to_string(ri_bad) + "/500, sign test max rel error " + fmt("%.2e", sign_worst) +
                    ", GMV max deviation " + fmt("%.2e", gmv_worst) + " (tol 1e-8)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Byte-identical reports at 1 and 8 threads.
Outcome determinism() {
  const fs::path dir = testing::temp_dir("determinism");
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"simulation": {"p": 80, "T": 120, "M": 5, "reps": 8, "structure": "partial"}})";
  }
  const std::vector<std::string> base = {"simulate", "--config", (dir / "cfg.json").string(), "--seed", "31337",
                                         "--methods", "CSH,CSK,SOFT,AL,SCAD"};
  auto run = [&](const std::string& threads, const std::string& out) {
    auto args = base;
    args.insert(args.end(), {"--threads", threads, "--out", (dir / out).string()});
    return run_cli(args);
  };
  const int a = run("1", "t1"), b = run("8", "t8");
  const std::string ra = slurp(dir / "t1" / "report.json"), rb = slurp(dir / "t8" / "report.json");
  const bool same = !ra.empty() && ra == rb && slurp(dir / "t1" / "reps.csv") == slurp(dir / "t8" / "reps.csv");
  return {a == 0 && b == 0 && same, std::string("exit codes ") + std::to_string(a) + "/" + std::to_string(b) +
                                        (same ? ", reports identical (" + std::to_string(ra.size()) + " bytes)" : ", reports differ")};
}

}  // namespace

// --expect-fail N marks criterion N as known to fail. Its line still reads FAIL,
// but it does not set the exit status. Any other failure does.
int main(int argc, char** argv) {
  std::set<int> expected;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::string(argv[i]) != "--expect-fail") {
      std::fprintf(stderr, "usage: acceptance [--expect-fail N]...\n");
      return 2;
    }
    expected.insert(std::stoi(argv[i + 1]));
  }
  if (argc % 2 == 0) {
    std::fprintf(stderr, "usage: acceptance [--expect-fail N]...\n");
    return 2;
  }
  int failures = 0, unexpected = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) {
      ++failures;
      if (!expected.count(id)) ++unexpected;
    }
    std::printf("[%s] %2d %s: %s (%.0f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  };
  Report full300;
  report(1, "PD guarantee", pd_guarantee);
  report(2, "operator axioms", operator_axioms);
  report(3, "Ledoit-Wolf oracle", lw_oracle);
  report(4, "full block-diagonal case", [&] { return full_case(&full300); });
  report(5, "partial block-diagonal case", partial_case);
  report(6, "linkage ordering", linkage_order);
  report(7, "dimensionality trend", [&] { return dimension_trend(full300); });
  report(8, "Bai-Ng recovery", bai_ng);
  report(9, "metric oracles", metric_oracles);
  report(10, "determinism", determinism);
  std::printf("%d of 10 criteria failed, %d unexpected\n", failures, unexpected);
  return unexpected == 0 ? 0 : 1;
}
