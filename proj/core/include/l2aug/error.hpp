#pragma once

#include <stdexcept>
#include <string>

namespace l2aug {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy a primitive's contract.
struct ShapeError : Error {
  using Error::Error;
};

/// A forward pass produced NaN or infinity.
struct NonFiniteError : Error {
  using Error::Error;
};

/// File parsing, serialization, or missing-artifact failures.
struct IoError : Error {
  using Error::Error;
};

/// Invalid or inconsistent run configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace l2aug
