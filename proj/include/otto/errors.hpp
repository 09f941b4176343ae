#pragma once

#include <stdexcept>
#include <string>

namespace otto {

/// Precondition violation on a physical or numerical argument.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Adaptive step size collapsed below the representable minimum.
class StiffnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state component became non-finite during integration.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A feedback protocol left its admissible control range.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimum-time search could not bracket the feasibility boundary.
class SearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two time series could not be aligned sample by sample.
class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too many stochastic samples diverged.
class NoiseTooStrongError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration value; carries a location string when parsed from a file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace otto
