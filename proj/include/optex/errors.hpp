#pragma once

#include <stdexcept>
#include <string>

namespace optex {

/// Argument outside the mathematical domain of an operation (e.g. SoC > 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Surface concentration at or beyond (0, c_max), or a non-positive exchange
/// current; the square root / division in the kinetics degenerates.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API called in the wrong order (stepping a finished episode, empty buffer).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration or input file. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace optex
