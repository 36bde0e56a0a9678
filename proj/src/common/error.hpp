#pragma once

#include <stdexcept>
#include <string>

namespace nilm {

enum class ErrorCode {
  invalid_input = 1,
  parse = 2,
  format = 3,
  io = 4,
  state = 5,
  protocol = 6,
  not_found = 7,
  runtime = 8,
};

/// Base of every exception thrown by the core. The C API maps `code()` onto
/// its status enum one to one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct InvalidInput : Error {
  explicit InvalidInput(const std::string& what) : Error(ErrorCode::invalid_input, what) {}
};

/// Text input that could not be parsed; `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorCode::parse, line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Corrupt or incompatible model file; `offset()` is a byte offset into the file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset = 0)
      : Error(ErrorCode::format, what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

struct StateError : Error {
  explicit StateError(const std::string& what) : Error(ErrorCode::state, what) {}
};

/// Broker-level failure; `kind()` is the wire error code ("routing", "overflow", ...).
class ProtocolError : public Error {
 public:
  ProtocolError(std::string kind, const std::string& detail)
      : Error(ErrorCode::protocol, kind + ": " + detail), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct NotFound : Error {
  explicit NotFound(const std::string& what) : Error(ErrorCode::not_found, what) {}
};

}  // namespace nilm
