#pragma once

#include <stdexcept>
#include <string>

namespace ocbnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions disagree with the network architecture.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An experiment, prior or constraint configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tabular input does not match the declared schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A constrained input region cannot be sampled efficiently.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the supplied predictions.
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace ocbnn
