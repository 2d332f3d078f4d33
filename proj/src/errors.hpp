#pragma once

#include <stdexcept>
#include <string>

namespace miclust {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values (dimensions, ranges, unknown names).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed input text: CSV cells, config lines. The message carries the
// location (row/column or line number) when known.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: factorization failure, singular system after the
// fallback path. `component` is the mixture component involved, or -1 when
// the failure is not component specific (for example a shared covariance).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg, int component_index = -1)
      : Error(msg), component(component_index) {}
  int component;
};

// An imputation chain could not continue (persistent singularity, repeated
// fit failures).
class ChainFailure : public Error {
 public:
  using Error::Error;
};

// Mixture fitting could not produce a usable model (too few rows, identical
// rows, k out of range).
class DegenerateFit : public Error {
 public:
  using Error::Error;
};

// Root finding for a missingness intercept failed to bracket or converge.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace miclust
