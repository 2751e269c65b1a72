#pragma once

#include <stdexcept>
#include <string>

namespace mpnet {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with an operation's contract.
struct ShapeError : Error {
  using Error::Error;
};

// A precondition on a plain value failed (invalid axis, rate, label, ...).
struct ValueError : Error {
  using Error::Error;
};

// Dataset or weight-file problems (unreadable image, corrupt NTF, ...).
struct DataError : Error {
  using Error::Error;
};

// Experiment configuration problems.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite loss or other numeric breakdown during training.
struct NumericError : Error {
  using Error::Error;
};

// A function handed to grad_check produced different values on replay.
struct NonDeterministicError : Error {
  using Error::Error;
};

}  // namespace mpnet
