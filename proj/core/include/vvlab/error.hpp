#pragma once

#include <stdexcept>
#include <string>

namespace vvlab {

// Base for every error raised by the library. Callers that only care about
// "something in vvlab failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (JSON, CSV, model bytes).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was not met by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace vvlab
