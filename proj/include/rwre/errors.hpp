#pragma once

#include <stdexcept>
#include <string>

namespace rwre {

// Bad user input: malformed config, key outside schema, precondition violation.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parameter outside the family box, or an invalid site law / family spec.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Overflow or divergence in matrix-product accumulation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All grid evaluations were -inf; the data cannot rank parameters.
struct DegenerateDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rwre
