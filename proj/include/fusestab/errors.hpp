#pragma once

#include <stdexcept>
#include <string>

namespace fusestab {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Query outside the range covered by sensor data or a lookup table.
class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// A ray ended up with non-positive depth after rotation.
class BehindCamera : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Malformed file or config. Carries the source name and 1-based line (0 = whole file).
class FormatError : public Error {
 public:
  FormatError(const std::string& source, int line, const std::string& what)
      : Error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        source_(source),
        line_(line) {}

  const std::string& source() const { return source_; }
  int line() const { return line_; }

 private:
  std::string source_;
  int line_;
};

/// Non-finite value produced during optimization or training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fusestab
