#pragma once

#include <stdexcept>
#include <string>

namespace topgeo {

// Shape/cardinality violations (bad tensor dims, indivisible point counts, ...).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration values (unknown keys, out-of-range hyperparameters, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unusable input data (empty directories, unreadable files, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace topgeo
