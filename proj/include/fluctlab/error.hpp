#pragma once

#include <stdexcept>
#include <string>

namespace fluctlab {

// Bad user input or violated precondition. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure could not deliver what was asked (tolerance, CFL, ...).
// The CLI maps this to exit code 1.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fluctlab
