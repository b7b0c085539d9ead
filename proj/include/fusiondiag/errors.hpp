#pragma once

#include <stdexcept>
#include <string>

namespace fdiag {

// Tensor/layer shape contract violated.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration or precondition (bad hyperparameter, missing input).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input data could not be read or is inconsistent.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model file is malformed (bad magic, truncated blob, manifest mismatch).
struct FormatError : DataError {
  using DataError::DataError;
};

// Non-finite value produced during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fdiag
