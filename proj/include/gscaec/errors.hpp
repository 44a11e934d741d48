#pragma once

#include <stdexcept>
#include <string>

namespace gscaec {

/// Malformed or inconsistent user input (config files, CLI arguments, dimensions).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure: a matrix that should be SPD is not, a system is too
/// ill-conditioned to solve, or every Monte Carlo run diverged.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gscaec
