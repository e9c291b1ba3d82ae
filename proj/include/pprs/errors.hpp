#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pprs {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched image / segmentation / dataset shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// File content that does not follow its declared format. Carries the byte
/// offset at which parsing stopped.
class ParseError : public Error {
 public:
  enum class Kind { kBadMagic, kMalformedHeader, kTruncatedPayload, kLengthMismatch, kCountMismatch };

  ParseError(Kind kind, std::size_t offset, const std::string& what)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

}  // namespace pprs
