#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace domino {

// Precondition or contract violation on caller-supplied data.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A symmetric positive-definite factorization failed even after the
// largest jitter in the escalation ladder.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double attempted_jitter)
      : std::runtime_error(what), attempted_jitter_(attempted_jitter) {}

  double attempted_jitter() const noexcept { return attempted_jitter_; }

 private:
  double attempted_jitter_;
};

// Every unnormalized walk weight collapsed to zero (performance underflow).
class DegenerateWeights : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input. line() is 1-based; 0 when not attributable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace domino
