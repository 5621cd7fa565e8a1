#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpool {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes do not chain, or an operand is empty.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced or admitted.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed input document. `position` is a byte offset, a line number for
// line-delimited files, or npos when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position = npos)
      : Error(position == npos ? what : what + " (at " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::size_t position_;
};

// Violated precondition on a domain value (bad config, missing labels,
// infeasible dataset spec, coverage gaps in prediction logs, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace gpool
