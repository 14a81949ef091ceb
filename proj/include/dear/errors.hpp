#pragma once

#include <stdexcept>
#include <string>

namespace dear {

// Shape or dimension disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Malformed or mismatched file content (manifest, clip cache, checkpoint).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dear
