#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emogen {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse-time error carrying the 1-based source position of the offending token.
class LocatedError : public Error {
 public:
  LocatedError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class SyntaxError : public LocatedError {
 public:
  using LocatedError::LocatedError;
};

class SemanticError : public LocatedError {
 public:
  using LocatedError::LocatedError;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class EmptyMelody : public Error {
 public:
  EmptyMelody() : Error("melody contains no sounded note") {}
};

class UnsupportedFeature : public Error {
 public:
  using Error::Error;
};

class DegenerateSeries : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("corpus is empty") {}
  explicit EmptyCorpus(const std::string& what) : Error(what) {}
};

class EmptyBuffer : public Error {
 public:
  EmptyBuffer() : Error("audio buffer is empty") {}
};

class ExhaustedRetries : public Error {
 public:
  using Error::Error;
};

/// The model has counts, but none for the requested conditioning label.
class UnseenLabel : public Error {
 public:
  using Error::Error;
};

class MalformedTable : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace emogen
