#pragma once

#include <stdexcept>
#include <string>

namespace iad {

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError (and subclasses) -> 1, DataError -> 2, NumericError -> 3.

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dimension / layout mismatch between tensors or parameter vectors.
class ShapeError : public ConfigError {
 public:
  explicit ShapeError(const std::string& what) : ConfigError(what) {}
};

// Ingestion problems: unreadable files, schema mismatches, bad recipes.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, divergence during training, domain violations.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iad
