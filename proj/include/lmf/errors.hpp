#pragma once

#include <stdexcept>
#include <string>

namespace lmf {

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct OrderTooLarge : std::length_error {
  using std::length_error::length_error;
};

struct SizeTooLarge : std::length_error {
  using std::length_error::length_error;
};

struct MissingAppendedOne : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lmf
