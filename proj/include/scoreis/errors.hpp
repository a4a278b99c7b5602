#pragma once

#include <stdexcept>
#include <string>

namespace scoreis {

/// Caller broke a precondition: shape mismatch, index out of range, bad root.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Argument outside the mathematical domain of an operation (e.g. log of a
/// non-positive value).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid configuration values (schedule length, hyperparameters, specs).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value or otherwise broke down.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File, parse or schema problems.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scoreis
