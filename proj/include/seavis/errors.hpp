#pragma once

#include <stdexcept>
#include <string>

namespace seavis {

// Shape or size disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid parameter or scenario configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Frames submitted out of order or duplicated.
struct OrderingError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed serialized input; message names the failing line.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace seavis
