#pragma once

#include "blockcov/estimators.hpp"
#include "blockcov/simulation.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace blockcov {

struct BacktestSettings {
  Index train_len = 252;
  Index hold_len = 22;
  Index p = 100;
};

/// Everything a run needs. Every field has a default; `from_json` rejects
/// unknown keys and `to_json` writes the fully resolved form.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string output_dir = "out";
  int threads = 1;
  std::vector<Method> methods = {Method::CSH, Method::CSK, Method::SOFT, Method::AL, Method::SCAD};
  EstimatorConfig estimator;

  SimulationSpec simulation;
  bool use_true_K = true;
  std::string reference;      // sign-test reference method; first method when empty
  double nonzero_tol = 1e-12;
  std::vector<Index> sweep_p;  // dimension sweep when nonempty

  BacktestSettings backtest;
  bool include_matrices = true;  // estimate: embed sigma and psi in the report

  void validate() const;
  nlohmann::json to_json() const;
  /// Throws ConfigError on unknown keys or ill-typed values.
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config(const std::filesystem::path& path);

}  // namespace blockcov
