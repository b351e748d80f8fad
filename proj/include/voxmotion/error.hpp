#pragma once

#include <stdexcept>
#include <string>

namespace voxmotion {

/// Malformed or unrecognized file content (CLI exit code 2).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Violated precondition or domain invariant (CLI exit code 3).
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values or failed numerical checks (CLI exit code 4).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace voxmotion
