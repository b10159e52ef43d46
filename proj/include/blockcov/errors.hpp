#pragma once

#include <stdexcept>
#include <string>

namespace blockcov {

// Three failure families map onto the CLI exit codes (2, 3, 4).

/// Invalid configuration or arguments.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed, missing or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical routine could not produce a valid result (e.g. a matrix
/// that should be positive definite is not).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace blockcov
