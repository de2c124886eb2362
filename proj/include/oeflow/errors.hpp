#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oeflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or vector dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A forward or loss evaluation produced NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class TrainingDiverged : public NumericError {
 public:
  explicit TrainingDiverged(const std::string& what, long epoch = -1)
      : NumericError(epoch >= 0 ? what + " (epoch " + std::to_string(epoch) + ")" : what),
        epoch_(epoch) {}
  long epoch() const { return epoch_; }

 private:
  long epoch_;
};

/// Invalid arguments, configuration or call sequence.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text. line() is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid file whose contents violate a format rule.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace oeflow
