#pragma once

#include <stdexcept>

namespace melad {

/// Raised when tensor extents or argument shapes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable, missing or undecodable input data (files, images, CSVs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace melad
