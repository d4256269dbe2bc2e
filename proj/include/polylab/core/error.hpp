#pragma once

#include <stdexcept>
#include <string>

namespace polylab {

// Argument outside the mathematical domain of an operation (t <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Inconsistent or unsupported configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A runtime invariant tripped (leakage, negative density, overflow).
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace polylab
