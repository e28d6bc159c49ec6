#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace driftprobe {

// Base of every error the library throws. Callers that only care about
// "something went wrong with the input" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A line of input could not be decoded. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed records that violate a structural invariant (gaps, duplicates,
// zero-turn sessions, compactions out of range).
class StructuralError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

// Bad configuration: dangling references, missing credentials, unknown ids.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numeric input outside the operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace driftprobe
