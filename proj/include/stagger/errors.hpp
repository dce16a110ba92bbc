#pragma once

#include <stdexcept>
#include <string>

namespace stagger {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad CSV, missing columns, duplicate rows, invalid specs.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// The estimation problem is degenerate (collinear design, too few clusters, ...).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// An iterative routine did not converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A model parameter lies outside the region where the closed forms are valid.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace stagger
