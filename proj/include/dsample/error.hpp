#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsample {

using Shape = std::vector<std::size_t>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation receives tensors whose shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed files, unreadable paths, bad tokens.
class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] inline void throw_shape(const char* op, const Shape& a) {
  throw ShapeError(std::string("op '") + op + "': unsupported shape " + shape_str(a));
}

[[noreturn]] inline void throw_shape(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string("op '") + op + "': incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

}  // namespace dsample
