#pragma once
// Exception hierarchy shared by every kgf module.

#include <stdexcept>
#include <string>

namespace kgf {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (bad field count, unreadable path, bad config line).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Token not present in a fixed vocabulary.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

/// Entity or relation id outside the declared range.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatch inside a tensor op; message names the op and both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Two evaluations of a closure that must be deterministic disagreed.
class DeterminismError : public Error {
 public:
  using Error::Error;
};

/// Dense attention requested on a graph too large for an |V|x|V| matrix.
class OracleScopeError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a NaN or infinite loss.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace kgf
