// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fexgan {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad key, out-of-range value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corpus layout problems and image decode failures.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape mismatch between a caller and a network.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A loss became NaN or Inf during optimization.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace fexgan
