#pragma once

#include <stdexcept>
#include <string>

namespace stgcn {

/// Shape or extent mismatch between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a documented invariant (negative weight, ragged rows, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model or run configuration is inconsistent.
class ConfigurationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// API misuse, e.g. calling backward twice on one tape.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN/Inf produced, or a gradient check failed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stgcn
