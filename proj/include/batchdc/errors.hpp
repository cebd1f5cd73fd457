#pragma once

#include <stdexcept>
#include <string>

namespace batchdc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON, JSON Lines or MATPOWER text).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input uses a feature the DC model does not cover (e.g. MATPOWER dclines).
class UnsupportedFeature : public Error {
 public:
  using Error::Error;
};

/// The reduced susceptance matrix could not be factorized.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

/// An outage (single or multiple) disconnects the grid.
class IslandingError : public Error {
 public:
  using Error::Error;
};

/// A bus split whose BSDF denominator vanishes: the split islands the grid.
class SingularSplit : public Error {
 public:
  using Error::Error;
};

/// A bus split leaving no susceptance on busbar A.
class DegenerateSplit : public Error {
 public:
  using Error::Error;
};

/// Static-node reduction requested on nodes that are still needed.
class InvalidReduction : public Error {
 public:
  using Error::Error;
};

/// Explicit topology built by the reference oracle is disconnected at N-0.
class DisconnectedTopology : public Error {
 public:
  using Error::Error;
};

/// Invalid solver configuration or task batch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace batchdc
