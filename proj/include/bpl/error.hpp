#pragma once

#include <stdexcept>
#include <string>

namespace bpl {

/// Input shapes or sizes that do not fit the receiving object.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad configuration values (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, factorization failures (maps to CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A human-oracle duel went unanswered for longer than the configured wait.
class OracleTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(long got, long want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace bpl
