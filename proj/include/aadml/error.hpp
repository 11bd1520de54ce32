#pragma once

#include <stdexcept>
#include <string>

namespace aadml {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform; message names the offending shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File parsing / serialization failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Bad run configuration (rejected before any compute).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace aadml
