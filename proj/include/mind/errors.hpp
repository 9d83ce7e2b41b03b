#pragma once

#include <stdexcept>

namespace mind {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand dimensions disagree; message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Wrong tensor rank, e.g. backward() on a non-scalar.
struct RankError : Error {
  using Error::Error;
};

// Batch too small for the requested operation.
struct BatchSizeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Container parsing / validation failures.
struct FormatError : Error {
  using Error::Error;
};

// Non-finite loss or gradient; message names the offending term.
struct DivergenceError : Error {
  using Error::Error;
};

// Probe requested on a dataset without ground-truth factors.
struct ProbeError : Error {
  using Error::Error;
};

}  // namespace mind
