#pragma once

#include <stdexcept>
#include <string>

namespace aniso {

// Invalid input to a numerical primitive (negative radius, coincident
// particles, zero velocity where a direction is required, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid parameters or configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedDimension : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Iterative solver gave up. Maps to CLI exit code 3.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonConvergence : public NumericalFailure {
 public:
  NonConvergence(const std::string& what, double last_x, double last_y)
      : NumericalFailure(what), last_iterate{last_x, last_y} {}
  double last_iterate[2];
};

class UnresolvedJump : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

}  // namespace aniso
