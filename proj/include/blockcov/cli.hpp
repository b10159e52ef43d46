#pragma once

#include "blockcov/panel_io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace blockcov {

/// Entry point of the `blockcov` executable. Exit codes: 0 success,
/// 2 configuration error, 3 data error, 4 numerical failure.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

/// Square matrix as CSV: header `asset,<ids...>`, one row per asset.
void write_matrix_csv(const Matrix& m, const std::vector<std::string>& ids, const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* ids = nullptr);

/// Flat CSV tables derived from a SIMULATION, SWEEP, BACKTEST or COMPARE
/// report. Returns the files written.
std::vector<std::filesystem::path> write_tables(const Report& report, const std::filesystem::path& dir);

}  // namespace blockcov
