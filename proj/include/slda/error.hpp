#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape stencil cannot be built (size below the minimum).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling exhausted its attempts for one particle.
class PlacementError : public Error {
 public:
  PlacementError(std::size_t particle_index, const std::string& what)
      : Error(what), particle_index_(particle_index) {}
  std::size_t particle_index() const noexcept { return particle_index_; }

 private:
  std::size_t particle_index_;
};

/// Scene violates a SceneSpec invariant (empty, out of grid, overlapping).
class SceneError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or out-of-range configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Array or vector has the wrong dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Overlap parameter is undefined (zero-total input).
class OverlapError : public Error {
 public:
  using Error::Error;
};

/// A closed-form far field is not available for the requested shape.
class UnsupportedOracleError : public Error {
 public:
  using Error::Error;
};

/// Class label is outside its schema.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or unsupported on-disk container.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace slda
