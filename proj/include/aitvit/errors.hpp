#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aitvit {

// Base of every error raised by the library. The CLI maps the subclasses
// onto exit codes (config -> 2, data/format -> 3, numerical -> 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A numeric argument outside its admissible range (e.g. alpha not in (0, 2]).
class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// The perturbation budget collapses to zero (e.g. an all-zero frame).
class BudgetError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// ||g||_2 == 0 or x* == x0: the attack has no direction to move in.
class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace aitvit
