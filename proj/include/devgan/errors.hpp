#pragma once

#include <stdexcept>
#include <string>

namespace devgan {

// Tensor shapes or layer chains that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Violated argument contract that is not a shape problem (ranges, binary input, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Missing, unreadable or malformed input data (images, directories).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint/report files that fail to parse, are truncated or corrupt.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered during training or a gradient oracle evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace devgan
