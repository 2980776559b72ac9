#pragma once

#include <stdexcept>
#include <string>

namespace rslq {

// Base class for everything this library throws on invalid input or
// failed solves. The CLI maps subclasses to distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed problem file or generator data.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("parse error at line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class GeneratorError : public Error {
 public:
  using Error::Error;
};

// A positive-definiteness or invertibility requirement failed at a grid
// node. Carries the location so callers can report where the solve died.
class RegularityError : public Error {
 public:
  RegularityError(const std::string& what, double s, int regime)
      : Error(what + " at s=" + std::to_string(s) + ", regime " +
              std::to_string(regime)),
        s_(s),
        regime_(regime) {}
  double s() const { return s_; }
  int regime() const { return regime_; }

 private:
  double s_;
  int regime_;
};

class BlowupError : public Error {
 public:
  BlowupError(const std::string& what, double last_valid_s)
      : Error(what + "; last valid node s=" + std::to_string(last_valid_s)),
        last_valid_s_(last_valid_s) {}
  double last_valid_s() const { return last_valid_s_; }

 private:
  double last_valid_s_;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace rslq
