#pragma once

#include <stdexcept>
#include <string>

namespace symcons {

// Bad input data: malformed files, label/task mismatches, unreadable paths.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf in a loss or gradient, failed gradient check.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on an argument (bad config, wrong head, size mismatch).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace symcons
