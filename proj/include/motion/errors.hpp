#pragma once

#include <stdexcept>
#include <string>

namespace motion {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (log of a
/// non-positive value, acos outside [-1, 1], non-finite intermediate).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An API precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Data fails a semantic validity check (degenerate limb, collinear plane).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A test oracle could not be evaluated reliably.
class OracleError : public Error {
 public:
  using Error::Error;
};

/// Training aborted (NaN loss, divergence).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Filesystem / IO failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace motion
