// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace emod {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible array shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Math domain violations (log of non-positive values, NaN payloads, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Autodiff graph misuse (non-scalar backward, double backward).
class GraphError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent files (bad magic, truncation, scheme mismatch).
class DataError : public Error {
 public:
  using Error::Error;
};

// Contrastive batch where every anchor must be skipped.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace emod
