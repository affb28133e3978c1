#pragma once

#include <stdexcept>
#include <string>

namespace slowcal {

/// Invalid configuration or argument; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed binary input (e.g. an IDX file with the wrong magic).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input shorter than its header declares.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// The problem has no unique finite minimizer.
class DegenerateProblem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative routine hit its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace slowcal
