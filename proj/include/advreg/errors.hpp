#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advreg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes violate an operation's arity rules.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of a differentiation graph (non-scalar loss, reuse after backward).
class GraphError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data: IDX files, checkpoints, reports.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination. `line` is 0 when the error is
// not tied to a config file location.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace advreg
