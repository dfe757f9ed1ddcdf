#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shadowstorm {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or configuration values supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Array shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures and malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content; `offset` is the byte position where parsing stopped.
class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

/// Non-finite values, divergence and other numeric breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A verification step (gradient check, bound check) did not pass.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace shadowstorm
