#pragma once

#include <stdexcept>
#include <string>

namespace ptcmil {

// Error taxonomy mirrored by the CLI exit codes: config -> 2, data -> 3,
// numeric/shape -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public NumericError {
 public:
  explicit ShapeError(const std::string& msg) : NumericError(msg) {}
};

// Bad argument values (invalid theta, C > D, ...).
class ValueError : public Error {
 public:
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

}  // namespace ptcmil
