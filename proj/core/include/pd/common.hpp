#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pd {

// Bad shapes, bad configuration, misuse of an API. Maps to CLI exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File system / decode failures. Maps to CLI exit code 2.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered, diverging optimization, degenerate numeric input.
// Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense array extents, always carried as (batch, channel, height, width).
// Lower-rank quantities keep trailing/leading extents at 1; a scalar is
// {1,1,1,1}.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::int64_t numel() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

inline Shape scalar_shape() { return Shape{1, 1, 1, 1}; }

}  // namespace pd
