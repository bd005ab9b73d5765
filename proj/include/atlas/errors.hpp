#ifndef ATLAS_ERRORS_HPP
#define ATLAS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace atlas {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shapes of operands do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// An iterative numerical routine failed (e.g. SVD did not converge).
class NumericError : public Error {
public:
  NumericError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Invalid model or pipeline configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// The autodiff tape was asked to record a primitive it cannot differentiate.
class CapabilityError : public Error {
public:
  using Error::Error;
};

/// A direction or embedding collapsed to (numerically) zero.
class DegenerateError : public Error {
public:
  using Error::Error;
};

/// A caller-side precondition was violated.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Malformed input file. `offset` is the byte position where parsing failed.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace atlas

#endif // ATLAS_ERRORS_HPP
