#pragma once

#include <stdexcept>
#include <string>

namespace defcor {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or shape disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A statistic or fit is undefined for the given data (zero variance, empty mask, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad argument or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace defcor
