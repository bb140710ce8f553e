#pragma once

#include <stdexcept>
#include <string>

namespace stvg {

// Operand shapes are incompatible (messages include both shapes).
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid static configuration: kernel sizes, ratios, ranks, k out of range.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runtime inputs violate a contract (non-normalized distribution, empty set, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operation produced a non-finite value; message names the op.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset / checkpoint file problems.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stvg
