#pragma once

#include <stdexcept>
#include <string>

namespace metricopt {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or shape disagreement between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or configuration value.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace metricopt
