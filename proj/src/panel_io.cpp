#include "blockcov/panel_io.hpp"

#include "blockcov/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace blockcov {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool is_missing_cell(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower = cell;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "na" || lower == "nan" || lower == "null";
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw DataError(path.string() + ": ragged row at line " + std::to_string(line_no) +
                      " (" + std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(table.header.size()) + ")");
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.header.size() < 2) throw DataError(path.string() + ": header needs a time column and at least one asset");
  return table;
}

void check_unique(const std::vector<std::string>& ids, const std::string& where) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (id.empty()) throw DataError(where + ": empty asset identifier");
    if (!seen.insert(id).second) throw DataError(where + ": duplicate asset identifier '" + id + "'");
  }
}

}  // namespace

void ReturnPanel::validate() const {
  if (values.rows() != static_cast<Index>(assets.size()) ||
      values.cols() != static_cast<Index>(times.size())) {
    throw DataError("panel labels do not match the value matrix shape");
  }
  if (p() < 2) throw DataError("panel needs at least 2 assets");
  if (T() < 3) throw DataError("panel needs at least 3 time steps");
  check_unique(assets, "panel");
  if (!values.allFinite()) throw DataError("panel contains non-finite values");
}

ReturnPanel ReturnPanel::slice_time(Index first, Index count) const {
  if (first < 0 || count < 0 || first + count > T()) throw DataError("time slice out of range");
  ReturnPanel out;
  out.assets = assets;
  out.times.assign(times.begin() + first, times.begin() + first + count);
  out.values = values.middleCols(first, count);
  return out;
}

ReturnPanel ReturnPanel::select_assets(const std::vector<Index>& rows) const {
  ReturnPanel out;
  out.times = times;
  out.values.resize(static_cast<Index>(rows.size()), T());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.assets.push_back(assets.at(static_cast<std::size_t>(rows[k])));
    out.values.row(static_cast<Index>(k)) = values.row(rows[k]);
  }
  return out;
}

ReturnPanel ReturnPanel::from_matrix(const Matrix& values) {
  ReturnPanel out;
  out.values = values;
  for (Index i = 0; i < values.rows(); ++i) {
    std::ostringstream os;
    os << 'A' << std::setw(4) << std::setfill('0') << (i + 1);
    out.assets.push_back(os.str());
  }
  for (Index t = 0; t < values.cols(); ++t) {
    std::ostringstream os;
    os << 't' << std::setw(4) << std::setfill('0') << (t + 1);
    out.times.push_back(os.str());
  }
  return out;
}

ReturnPanel load_returns(const std::filesystem::path& path) {
  RawTable table = read_table(path);
  ReturnPanel panel;
  panel.assets.assign(table.header.begin() + 1, table.header.end());
  check_unique(panel.assets, path.string());
  const auto p = static_cast<Index>(panel.assets.size());
  const auto T = static_cast<Index>(table.rows.size());
  panel.values.resize(p, T);
  for (Index t = 0; t < T; ++t) {
    const auto& row = table.rows[static_cast<std::size_t>(t)];
    panel.times.push_back(row[0]);
    for (Index i = 0; i < p; ++i) {
      const auto& cell = row[static_cast<std::size_t>(i + 1)];
      double v = 0.0;
      if (!parse_double(cell, v) || !std::isfinite(v)) {
        // Data rows are numbered from 1, the header being row 0.
        throw DataError(path.string() + ": non-numeric or missing value '" + cell + "' at row " +
                        std::to_string(t + 1) + ", column " + std::to_string(i + 2) + " (" +
                        panel.assets[static_cast<std::size_t>(i)] + ")");
      }
      panel.values(i, t) = v;
    }
  }
  panel.validate();
  return panel;
}

void write_panel(const ReturnPanel& panel, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << "date";
  for (const auto& a : panel.assets) out << ',' << a;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index t = 0; t < panel.T(); ++t) {
    out << panel.times[static_cast<std::size_t>(t)];
    for (Index i = 0; i < panel.p(); ++i) out << ',' << panel.values(i, t);
    out << '\n';
  }
  if (!out) throw DataError("I/O failure writing " + path.string());
}

ClassificationMap load_classification(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  ClassificationMap classes;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 2) {
      throw DataError(path.string() + ": expected 2 columns at line " + std::to_string(line_no));
    }
    if (first) {
      first = false;
      if (cells[0] == "asset" && cells[1] == "code") continue;
    }
    if (cells[0].empty() || cells[1].empty()) {
      throw DataError(path.string() + ": empty asset or code at line " + std::to_string(line_no));
    }
    if (!classes.emplace(cells[0], cells[1]).second) {
      throw DataError(path.string() + ": duplicate asset '" + cells[0] + "'");
    }
  }
  return classes;
}

MarketCapPanel load_marketcaps(const std::filesystem::path& path) {
  RawTable table = read_table(path);
  MarketCapPanel caps;
  caps.assets.assign(table.header.begin() + 1, table.header.end());
  check_unique(caps.assets, path.string());
  const auto n = static_cast<Index>(caps.assets.size());
  const auto T = static_cast<Index>(table.rows.size());
  caps.values.resize(n, T);
  for (Index t = 0; t < T; ++t) {
    const auto& row = table.rows[static_cast<std::size_t>(t)];
    caps.times.push_back(row[0]);
    for (Index i = 0; i < n; ++i) {
      const auto& cell = row[static_cast<std::size_t>(i + 1)];
      double v = 0.0;
      if (is_missing_cell(cell)) {
        v = std::numeric_limits<double>::quiet_NaN();
      } else if (!parse_double(cell, v)) {
        throw DataError(path.string() + ": non-numeric value '" + cell + "' at row " +
                        std::to_string(t + 1) + ", column " + std::to_string(i + 2));
      }
      caps.values(i, t) = v;
    }
  }
  return caps;
}

ReturnPanel select_universe(const ReturnPanel& panel,
                            const std::map<std::string, double>& marketcaps,
                            const ClassificationMap& classes, Index p, Index train_len,
                            Index test_len) {
  if (train_len < 1 || test_len < 1 || train_len + test_len > panel.T()) {
    throw ConfigError("select_universe: train_len + test_len must fit in the panel");
  }
  if (p < 1) throw ConfigError("select_universe: p must be positive");

  struct Candidate {
    Index row;
    double cap;
    const std::string* id;
  };
  std::vector<Candidate> candidates;
  for (Index i = 0; i < panel.p(); ++i) {
    const auto& id = panel.assets[static_cast<std::size_t>(i)];
    auto cap = marketcaps.find(id);
    if (cap == marketcaps.end() || !std::isfinite(cap->second)) continue;
    if (!classes.contains(id)) continue;
    const auto train = panel.values.row(i).segment(0, train_len);
    const auto test = panel.values.row(i).segment(train_len, test_len);
    if (!train.allFinite() || !test.allFinite()) continue;
    if ((train.array() == 0.0).all() || (test.array() == 0.0).all()) continue;
    candidates.push_back({i, cap->second, &id});
  }
  if (static_cast<Index>(candidates.size()) < p) {
    throw DataError("select_universe: only " + std::to_string(candidates.size()) +
                    " assets pass the filters, " + std::to_string(p) + " requested");
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.cap != b.cap) return a.cap > b.cap;
    return *a.id < *b.id;
  });
  std::vector<Index> rows;
  for (Index k = 0; k < p; ++k) rows.push_back(candidates[static_cast<std::size_t>(k)].row);
  std::sort(rows.begin(), rows.end());
  return panel.select_assets(rows);
}

bool is_valid_report_tag(const std::string& tag) {
  static const std::set<std::string> tags = {
      "CSH",     "CSK",        "CSI",      "SOFT",   "AL",       "SCAD",  "HARD",
      "DIAG",    "ORACLE",     "ESTIMATE", "COMPARE", "SIMULATION", "SWEEP", "BACKTEST",
      "WINDOW",  "REPETITION"};
  return tags.contains(tag);
}

void Report::validate() const {
  if (!is_valid_report_tag(tag)) throw DataError("report: unknown tag '" + tag + "'");
  for (const auto& [name, value] : metrics) {
    if (!std::isfinite(value)) throw DataError("report: metric '" + name + "' is not finite");
  }
  for (const auto& child : children) child.validate();
}

nlohmann::json Report::to_json() const {
  nlohmann::json j;
  j["tag"] = tag;
  j["hyperparameters"] = hyperparameters;
  j["metrics"] = metrics;
  j["metadata"] = metadata;
  if (!data.empty()) j["data"] = data;
  if (!children.empty()) {
    j["children"] = nlohmann::json::array();
    for (const auto& c : children) j["children"].push_back(c.to_json());
  }
  return j;
}

Report Report::from_json(const nlohmann::json& j) {
  Report r;
  try {
    r.tag = j.at("tag").get<std::string>();
    r.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
    r.metrics = j.value("metrics", std::map<std::string, double>{});
    r.metadata = j.value("metadata", nlohmann::json::object());
    r.data = j.value("data", nlohmann::json::object());
    if (j.contains("children")) {
      for (const auto& c : j.at("children")) r.children.push_back(from_json(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  r.validate();
  return r;
}

void write_json(const nlohmann::json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("I/O failure writing " + path.string());
}

void write_report(const Report& report, const std::filesystem::path& path) {
  report.validate();
  write_json(report.to_json(), path);
}

Report read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return Report::from_json(j);
}

}  // namespace blockcov
