#pragma once

#include <stdexcept>
#include <string>

namespace kcg {

/** @brief Base class for all library errors. */
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/** @brief Invalid configuration value or missing required parameter. */
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

/** @brief Mismatched vector/matrix dimensions at an API boundary. */
class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& what) : Error("dimension error: " + what) {}
};

/** @brief Numerical degeneracy: non-finite values, negative squared norms, etc. */
class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error("numeric error: " + what) {}
};

/** @brief Synthetic-problem generator cannot certify a requested property. */
class GeneratorError : public Error {
public:
  explicit GeneratorError(const std::string& what) : Error("generator error: " + what) {}
};

}  // namespace kcg
