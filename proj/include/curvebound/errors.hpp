#pragma once

#include <stdexcept>
#include <string>

namespace curvebound {

/// Non-finite or otherwise unusable evaluation of V, its derivatives, or rho.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Quadrature domain cannot represent the measure (tail mass, overflow).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition of a bound formula or estimator.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Monte Carlo ensemble is unusable (too many escaped paths).
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace curvebound
