#pragma once

#include <stdexcept>
#include <string>

namespace fwigan {

/// Bad caller input: shapes, bounds, malformed files, unusable flags.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation went numerically wrong (instability, non-finite values).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fwigan
