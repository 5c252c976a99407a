#pragma once

#include <stdexcept>
#include <string>

namespace decept {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN/Inf, or an input was outside the numeric domain.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A caller violated a documented precondition (bad config, malformed input).
class ContractError : public Error {
 public:
  using Error::Error;
};

// The finite-difference oracle could not certify a function (e.g. it is
// not deterministic between two evaluations at the same point).
class OracleError : public Error {
 public:
  using Error::Error;
};

// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace decept
