#ifndef DTCALIB_ERRORS_HPP_
#define DTCALIB_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dtcalib {

/// Base class for every error raised by the calibration library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class CoverageError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class CheiralityError : public Error { using Error::Error; };
class DegenerateMotion : public Error { using Error::Error; };
class ConvergenceFailure : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

/// Malformed input file; carries the 1-based line number of the offending row.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace dtcalib

#endif  // DTCALIB_ERRORS_HPP_
