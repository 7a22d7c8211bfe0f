#pragma once

#include <stdexcept>
#include <string>

namespace gabor_adapt {

/// Unreadable or unwritable file.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file contents or unsupported raster layout.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values produced during a numerical computation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid argument passed to a library call.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Inconsistent model or run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gabor_adapt
