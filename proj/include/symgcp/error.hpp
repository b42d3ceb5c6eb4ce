#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace symgcp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, ranks or mode numbers.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed partitions, configs or option values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A loss was evaluated outside its domain. Carries the offending
/// (0-based) multi-index when it is known.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::vector<std::size_t> index = {})
      : Error(what), index_(std::move(index)) {}

  const std::vector<std::size_t>& index() const noexcept { return index_; }

 private:
  std::vector<std::size_t> index_;
};

/// File parse / read / write failures. `line` is 1-based, 0 if not applicable.
class IoError : public Error {
 public:
  IoError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Stochastic zero sampling could not find a zero entry within its budget.
class SamplingError : public Error {
 public:
  using Error::Error;
};

}  // namespace symgcp
