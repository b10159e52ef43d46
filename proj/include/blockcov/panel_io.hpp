#pragma once

#include "blockcov/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace blockcov {

/// p x T panel of arithmetic returns. Row i belongs to assets[i], column t
/// to times[t].
struct ReturnPanel {
  std::vector<std::string> assets;
  std::vector<std::string> times;
  Matrix values;

  Index p() const { return values.rows(); }
  Index T() const { return values.cols(); }

  /// Throws DataError unless p >= 2, T >= 3, labels match the matrix shape,
  /// asset identifiers are unique and every value is finite.
  void validate() const;

  /// Columns [first, first + count).
  ReturnPanel slice_time(Index first, Index count) const;
  /// Rows in the given order.
  ReturnPanel select_assets(const std::vector<Index>& rows) const;

  /// Wraps a bare matrix with generated identifiers (A0001.., t0001..).
  static ReturnPanel from_matrix(const Matrix& values);
};

/// asset -> group code (e.g. SIC sector).
using ClassificationMap = std::map<std::string, std::string>;

/// Market capitalisations on the return panel's calendar. Missing
/// observations are stored as NaN; `load_marketcaps` is the only loader in
/// the project that accepts missing cells.
struct MarketCapPanel {
  std::vector<std::string> assets;
  std::vector<std::string> times;
  Matrix values;  // assets x times
};

/// Wide CSV: header `date,ASSET1,ASSET2,...`, one row per time step.
ReturnPanel load_returns(const std::filesystem::path& path);
/// Writes the wide CSV format read by load_returns. Values are printed with
/// 17 significant digits so that a reload reproduces them exactly.
void write_panel(const ReturnPanel& panel, const std::filesystem::path& path);

/// Two columns `asset,code`; a header line is optional.
ClassificationMap load_classification(const std::filesystem::path& path);

/// Same layout as the returns CSV; empty, `NA` and `nan` cells are missing.
MarketCapPanel load_marketcaps(const std::filesystem::path& path);

/// Top-`p` assets by market cap among those passing the universe filters:
///   1. a finite market cap is present for the asset,
///   2. at least one non-zero return in the first `train_len` columns and in
///      the following `test_len` columns,
///   3. the asset has a classification code.
/// Cap ties break by ascending identifier. Survivors keep panel order.
/// Throws DataError when fewer than `p` assets survive.
ReturnPanel select_universe(const ReturnPanel& panel,
                            const std::map<std::string, double>& marketcaps,
                            const ClassificationMap& classes, Index p,
                            Index train_len, Index test_len);

/// Tags accepted in Report::tag: the estimator tags plus run kinds.
bool is_valid_report_tag(const std::string& tag);

/// Serializable run output. Children carry per-method sub-reports.
struct Report {
  std::string tag;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::map<std::string, double> metrics;
  nlohmann::json metadata = nlohmann::json::object();
  nlohmann::json data = nlohmann::json::object();
  std::vector<Report> children;

  /// Throws DataError on a non-finite metric or an unknown tag.
  void validate() const;
  nlohmann::json to_json() const;
  static Report from_json(const nlohmann::json& j);
};

/// JSON with sorted keys and a trailing newline.
void write_report(const Report& report, const std::filesystem::path& path);
Report read_report(const std::filesystem::path& path);

/// Writes a JSON document with the same formatting as write_report.
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace blockcov
