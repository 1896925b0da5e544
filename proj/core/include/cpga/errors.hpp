#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpga {

// Bad shapes, out-of-range labels, violated preconditions.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inputs for which the quantity is undefined (zero-norm vectors, etc.).
class DegenerateInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// A contrastive batch that cannot supply the required positive/negative pairs.
class InvalidBatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Misuse of an object's lifecycle, e.g. backward on a foreign tape.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf produced by a computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cpga
