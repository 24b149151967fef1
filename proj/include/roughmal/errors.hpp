#pragma once

#include <stdexcept>
#include <string>

namespace roughmal {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (e.g. time not in [0,1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Covariance not factorizable and similar model-level failures.
class ModelError : public Error {
 public:
  using Error::Error;
};

// Declared regularities do not allow the requested pairing.
class RegularityError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace roughmal
