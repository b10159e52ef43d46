#include "blockcov/cli.hpp"

#include "blockcov/config.hpp"
#include "blockcov/errors.hpp"
#include "blockcov/evaluation.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

namespace blockcov {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::string cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return fmt(v.get<double>());
  return v.dump();
}

// Writes rows of objects with the given column order.
void write_rows(const json& rows, const std::vector<std::string>& cols, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out << (c ? "," : "") << (row.contains(cols[c]) ? cell(row.at(cols[c])) : "");
    }
    out << '\n';
  }
}

void log_event(const std::string& event, const json& fields) {
  json line = fields;
  line["event"] = event;
  std::cerr << line.dump() << '\n';
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(method_from_string(item));
  }
  if (out.empty()) throw ConfigError("--methods must name at least one method");
  return out;
}

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<int> threads;
  std::string methods;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.methods.empty()) cfg.methods = parse_methods(c.methods);
  return cfg;
}

void write_manifest(const std::string& command, const RunConfig& cfg, const json& inputs, const fs::path& dir) {
  json m;
  m["command"] = command;
  m["config"] = cfg.to_json();
  m["inputs"] = inputs;
  m["version"] = "0.1.0";
  write_json(m, dir / "manifest.json");
}

StudyOptions study_options(const RunConfig& cfg) {
  StudyOptions o;
  o.spec = cfg.simulation;
  o.spec.seed = *cfg.seed;
  o.methods = cfg.methods;
  o.estimator = cfg.estimator;
  o.use_true_K = cfg.use_true_K;
  o.reference = cfg.reference;
  o.nonzero_tol = cfg.nonzero_tol;
  o.threads = cfg.threads;
  return o;
}

int cmd_simulate(const RunConfig& cfg) {
  if (!cfg.seed) throw ConfigError("simulate needs --seed");
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  Report report;
  if (cfg.sweep_p.empty()) {
    report = run_simulation_study(study_options(cfg));
  } else {
    report.tag = "SWEEP";
    json ps = json::array();
    for (Index p : cfg.sweep_p) {
      StudyOptions o = study_options(cfg);
      o.spec.p = p;
      if (o.spec.structure == BlockStructure::Full) o.spec.M = std::min(o.spec.M, p);
      report.children.push_back(run_simulation_study(o));
      ps.push_back(p);
      log_event("sweep_point", {{"p", p}});
    }
    report.hyperparameters["sweep_p"] = ps;
  }
  for (const auto& r : report.children.empty() ? std::vector<Report>{report} : report.children) {
    for (const auto& f : r.data.at("failures")) log_event("skipped", f);
  }
  write_report(report, dir / "report.json");
  write_tables(report, dir);
  write_manifest("simulate", cfg, json::object(), dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_event("done", {{"command", "simulate"}, {"seconds", secs}, {"output", dir.string()}});
  return 0;
}

int cmd_estimate(RunConfig cfg, const std::string& returns, const std::string& classes_path) {
  if (cfg.seed) cfg.estimator.kmeans.seed = *cfg.seed;
  cfg.validate();
  const ReturnPanel panel = load_returns(returns);
  std::optional<ClassificationMap> classes;
  if (!classes_path.empty()) classes = load_classification(classes_path);
  for (Method m : cfg.methods) {
    if (m == Method::CSI && !classes) throw ConfigError("CSI needs --classes");
  }
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const Comparison cmp = compare(panel, cfg.methods, cfg.estimator, classes ? &*classes : nullptr, cfg.threads);
  Report report = cmp.to_report(cfg.include_matrices);
  report.metadata["assets"] = panel.assets;
  bool any_ok = false;
  for (std::size_t i = 0; i < cmp.methods.size(); ++i) {
    if (cmp.estimates[i]) {
      any_ok = true;
      write_matrix_csv(cmp.estimates[i]->sigma, panel.assets, dir / ("sigma_" + to_string(cmp.methods[i]) + ".csv"));
      write_matrix_csv(cmp.estimates[i]->psi, panel.assets, dir / ("psi_" + to_string(cmp.methods[i]) + ".csv"));
    } else {
      log_event("method_failed", {{"method", to_string(cmp.methods[i])}, {"error", cmp.errors[i]}});
    }
  }
  write_report(report, dir / "report.json");
  write_tables(report, dir);
  write_manifest("estimate", cfg, {{"returns", returns}, {"classes", classes_path}}, dir);
  if (!any_ok) throw NumericalError("every requested method failed");
  return 0;
}

int cmd_backtest(RunConfig cfg, const std::string& returns, const std::string& caps_path,
                 const std::string& classes_path) {
  if (cfg.seed) cfg.estimator.kmeans.seed = *cfg.seed;
  cfg.validate();
  if (caps_path.empty() || !fs::exists(caps_path)) throw DataError("market cap file not found: " + caps_path);
  if (classes_path.empty() || !fs::exists(classes_path)) throw DataError("classification file not found: " + classes_path);
  const ReturnPanel panel = load_returns(returns);
  const MarketCapPanel caps = load_marketcaps(caps_path);
  const ClassificationMap classes = load_classification(classes_path);
  BacktestOptions o;
  o.methods = cfg.methods;
  o.estimator = cfg.estimator;
  o.train_len = cfg.backtest.train_len;
  o.hold_len = cfg.backtest.hold_len;
  o.p = cfg.backtest.p;
  o.threads = cfg.threads;
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const Report report = run_backtest(panel, caps, classes, o);
  for (const auto& f : report.data.at("failures")) log_event("skipped", f);
  if (report.metrics.contains("K.min")) {
    const bool plausible = report.metrics.at("K.min") >= 2 && report.metrics.at("K.max") <= 10;
    log_event("factor_count", {{"min", report.metrics.at("K.min")},
                               {"max", report.metrics.at("K.max")},
                               {"within_2_10", plausible}});
  }
  write_report(report, dir / "report.json");
  write_tables(report, dir);
  write_manifest("backtest", cfg, {{"returns", returns}, {"caps", caps_path}, {"classes", classes_path}}, dir);
  return 0;
}

int cmd_report(const std::string& input, const std::string& out_dir) {
  const Report report = read_report(input);
  const fs::path dir = out_dir.empty() ? fs::path(input).parent_path() : fs::path(out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  for (const auto& f : write_tables(report, dir.empty() ? fs::path(".") : dir)) std::cout << f.string() << '\n';
  return 0;
}

json simulation_table(const Report& r, const json& extra) {
  json rows = json::array();
  for (const auto& [method, per] : r.data.at("summary").items()) {
    json row = extra;
    row["method"] = method;
    for (const auto& measure : simulation_measures()) {
      const json& s = per.at(measure);
      row[measure] = s.at("n").get<int>() > 0 ? s.at("mean") : json(nullptr);
      row[measure + "_se"] = s.at("n").get<int>() > 0 ? s.at("se") : json(nullptr);
    }
    for (const auto& t : r.data.at("sign_tests")) {
      if (t.at("benchmark") == method) row[t.at("measure").get<std::string>() + "_p_value"] = t.at("p_value");
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::string> simulation_columns(bool with_p) {
  std::vector<std::string> cols;
  if (with_p) cols.push_back("p");
  cols.push_back("method");
  for (const auto& m : simulation_measures()) cols.push_back(m);
  for (const auto& m : simulation_measures()) cols.push_back(m + "_se");
  for (const auto& m : simulation_measures()) cols.push_back(m + "_p_value");
  return cols;
}

std::vector<std::string> rep_columns(bool with_p) {
  std::vector<std::string> cols;
  if (with_p) cols.push_back("p");
  for (const char* c : {"rep", "method", "K", "K_bai_ng", "clusters", "true_clusters", "oracle_sigma_p"}) cols.push_back(c);
  for (const auto& m : simulation_measures()) cols.push_back(m);
  return cols;
}

}  // namespace

void write_matrix_csv(const Matrix& m, const std::vector<std::string>& ids, const fs::path& path) {
  if (m.rows() != static_cast<Index>(ids.size()) || m.cols() != m.rows()) {
    throw DataError("write_matrix_csv: shape does not match the identifiers");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "asset";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) out << ',' << fmt(m(i, j));
    out << '\n';
  }
}

Matrix read_matrix_csv(const fs::path& path, std::vector<std::string>* ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string item;
    std::getline(ss, item, ',');
    names.push_back(item);
    std::vector<double> row;
    while (std::getline(ss, item, ',')) {
      try {
        row.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": bad number '" + item + "' in row " + std::to_string(rows.size() + 2));
      }
    }
    if (row.size() != cols) throw DataError(path.string() + ": ragged row " + std::to_string(rows.size() + 2));
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  if (ids) *ids = std::move(names);
  return m;
}

std::vector<fs::path> write_tables(const Report& report, const fs::path& dir) {
  std::vector<fs::path> written;
  auto emit = [&](const json& rows, const std::vector<std::string>& cols, const std::string& name) {
    write_rows(rows, cols, dir / name);
    written.push_back(dir / name);
  };
  if (report.tag == "SIMULATION") {
    emit(simulation_table(report, json::object()), simulation_columns(false), "table.csv");
    emit(report.data.at("reps"), rep_columns(false), "reps.csv");
    emit(report.data.at("sign_tests"), {"reference", "benchmark", "measure", "n_plus", "n", "p_value"},
         "sign_tests.csv");
  } else if (report.tag == "SWEEP") {
    json table = json::array();
    json reps = json::array();
    for (const auto& child : report.children) {
      const json extra = {{"p", child.hyperparameters.at("p")}};
      for (auto row : simulation_table(child, extra)) table.push_back(row);
      for (auto row : child.data.at("reps")) {
        row["p"] = child.hyperparameters.at("p");
        reps.push_back(row);
      }
    }
    emit(table, simulation_columns(true), "sweep.csv");
    emit(reps, rep_columns(true), "sweep_reps.csv");
  } else if (report.tag == "BACKTEST") {
    emit(report.data.at("windows"),
         {"window", "start", "formation", "method", "K", "sigma_p", "rand_index_industry", "clusters"},
         "windows.csv");
    json rows = json::array();
    for (const auto& [method, s] : report.data.at("summary").items()) {
      rows.push_back({{"method", method},
                      {"sigma_p", s.at("sigma_p").at("mean")},
                      {"sigma_p_se", s.at("sigma_p").at("se")},
                      {"rand_index_industry", s.at("rand_index_industry").at("mean")},
                      {"windows", s.at("sigma_p").at("n")}});
    }
    emit(rows, {"method", "sigma_p", "sigma_p_se", "rand_index_industry", "windows"}, "table.csv");
  } else if (report.tag == "COMPARE") {
    json rows = json::array();
    for (const auto& c : report.children) {
      rows.push_back({{"method", c.tag},
                      {"K", c.metrics.at("K")},
                      {"num_clusters", c.metrics.at("num_clusters")},
                      {"min_eigenvalue", c.metrics.at("min_eigenvalue")},
                      {"psi_min_eigenvalue", c.metrics.at("psi_min_eigenvalue")}});
    }
    emit(rows, {"method", "K", "num_clusters", "min_eigenvalue", "psi_min_eigenvalue"}, "table.csv");
  } else {
    throw DataError("no tables defined for report tag " + report.tag);
  }
  return written;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Covariance estimation for factor models with block-diagonal idiosyncratic covariance"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  Common common;
  std::optional<std::uint64_t> seed;
  std::string returns, classes, caps, input;
  std::optional<int> reps;
  std::optional<Index> p;
  std::string structure;
  std::vector<Index> sweep;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out_dir, "Output directory");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--methods", common.methods, "Comma-separated method list, e.g. CSH,CSK,SCAD");
  };

  CLI::App* sim = app.add_subcommand("simulate", "Run a simulation study");
  add_common(sim);
  sim->add_option("--seed", seed, "Base seed")->required();
  sim->add_option("--reps", reps, "Repetitions");
  sim->add_option("--p", p, "Number of assets");
  sim->add_option("--structure", structure, "full or partial")->check(CLI::IsMember({"full", "partial"}));
  sim->add_option("--sweep-p", sweep, "Dimension sweep values")->delimiter(',');

  CLI::App* est = app.add_subcommand("estimate", "Estimate covariance matrices from a return panel");
  add_common(est);
  est->add_option("--returns", returns, "Returns CSV")->required();
  est->add_option("--classes", classes, "Classification CSV (needed by CSI)");
  est->add_option("--seed", seed, "k-means seed");

  CLI::App* bt = app.add_subcommand("backtest", "Rolling minimum-variance backtest");
  add_common(bt);
  bt->add_option("--returns", returns, "Returns CSV")->required();
  bt->add_option("--caps", caps, "Market cap CSV")->required();
  bt->add_option("--classes", classes, "Classification CSV")->required();
  bt->add_option("--seed", seed, "k-means seed");

  CLI::App* rep = app.add_subcommand("report", "Rebuild CSV tables from a report file");
  rep->add_option("--input", input, "report.json")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", common.out_dir, "Output directory (default: next to the input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rep->parsed()) return cmd_report(input, common.out_dir);
    RunConfig cfg = resolve(common);
    if (seed) cfg.seed = *seed;
    if (sim->parsed()) {
      if (reps) cfg.simulation.reps = *reps;
      if (p) cfg.simulation.p = *p;
      if (!structure.empty()) {
        cfg.simulation.structure = structure == "full" ? BlockStructure::Full : BlockStructure::Partial;
      }
      if (!sweep.empty()) cfg.sweep_p = sweep;
      return cmd_simulate(cfg);
    }
    if (est->parsed()) return cmd_estimate(cfg, returns, classes);
    if (bt->parsed()) return cmd_backtest(cfg, returns, caps, classes);
  } catch (const ConfigError& e) {
    log_event("error", {{"kind", "config"}, {"message", e.what()}});
    return 2;
  } catch (const DataError& e) {
    log_event("error", {{"kind", "data"}, {"message", e.what()}});
    return 3;
  } catch (const NumericalError& e) {
    log_event("error", {{"kind", "numerical"}, {"message", e.what()}});
    return 4;
  } catch (const fs::filesystem_error& e) {
    log_event("error", {{"kind", "data"}, {"message", e.what()}});
    return 3;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "blockcov");
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace blockcov
