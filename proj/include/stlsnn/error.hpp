#pragma once

#include <stdexcept>
#include <string>

namespace stlsnn {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer dimension disagreements.
struct ShapeError : Error {
  using Error::Error;
};

// Bad or missing configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or truncated files (wrong magic, short payload, bad line).
struct FormatError : Error {
  using Error::Error;
};

// Text input that fails to parse; message carries the line number.
struct ParseError : FormatError {
  using FormatError::FormatError;
};

// Ordering constraint violated (e.g. decreasing event timestamps).
struct OrderError : FormatError {
  using FormatError::FormatError;
};

// Two inputs that must agree do not (counts, shapes across files, ...).
struct ConsistencyError : Error {
  using Error::Error;
};

// NaN or infinity where a finite value is required.
struct NumericError : Error {
  using Error::Error;
};

// Scalar outside its documented domain.
struct RangeError : Error {
  using Error::Error;
};

struct EmptyInputError : Error {
  using Error::Error;
};

// Requested an operation a variant does not support.
struct UnsupportedError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace stlsnn
