#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pam {

enum class ErrorKind {
  argument,
  decode,
  unsupported_format,
  data,
  not_found,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorKind::argument, what) {}
};

/// Malformed container; `offset()` is the byte position where parsing failed.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::decode, what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class UnsupportedFormatError : public Error {
 public:
  explicit UnsupportedFormatError(const std::string& what) : Error(ErrorKind::unsupported_format, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& what) : Error(ErrorKind::not_found, what) {}
};

// CLI exit codes: 0 ok, 2 validation, 3 data error, 4 internal.
inline int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::argument:
      return 2;
    case ErrorKind::decode:
    case ErrorKind::unsupported_format:
    case ErrorKind::data:
    case ErrorKind::not_found:
      return 3;
    case ErrorKind::internal:
      return 4;
  }
  return 4;
}

}  // namespace pam
