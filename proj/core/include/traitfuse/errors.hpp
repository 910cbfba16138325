#pragma once

#include <stdexcept>
#include <string>

namespace traitfuse {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A numeric or categorical argument is out of its allowed range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data (files, streams, records) violates its format or invariants.
class DataError : public Error {
 public:
  using Error::Error;
};

/// API called in a state or with a combination it does not support.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace traitfuse
