#pragma once

#include <stdexcept>
#include <string>

namespace sgf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A zero lattice vector was used where a Fourier mode is required.
class InvalidModeError : public Error {
 public:
  using Error::Error;
};

/// Inputs violate a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Fields or signals built on different tori / truncations were combined.
class GeometryMismatch : public Error {
 public:
  using Error::Error;
};

/// Quadrature grid too coarse for exact evaluation of trigonometric products.
class AliasingError : public Error {
 public:
  using Error::Error;
};

/// Integration exceeded the blow-up ceiling.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// (m, n) does not satisfy the saturation hypotheses.
class RejectedPairError : public Error {
 public:
  using Error::Error;
};

/// |<F,G>| is numerically zero for an otherwise admissible pair.
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

/// No admissible generator pair exists for some target mode.
class LadderFailure : public Error {
 public:
  using Error::Error;
};

/// A descent stage could not meet its error budget within the retry cap.
class StageFailure : public Error {
 public:
  StageFailure(const std::string& what, int stage, double achieved)
      : Error(what), stage_(stage), achieved_(achieved) {}
  int stage() const noexcept { return stage_; }
  double achieved() const noexcept { return achieved_; }

 private:
  int stage_;
  double achieved_;
};

/// Malformed or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgf
