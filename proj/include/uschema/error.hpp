#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uschema {

// Base class for all errors raised by the library (bad input data,
// violated preconditions, malformed files). The CLI maps these to a
// data-error exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised while reading line-oriented text inputs; carries the 1-based
// line number of the offending line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace uschema
