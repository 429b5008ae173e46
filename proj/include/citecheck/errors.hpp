#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace citecheck {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed markup or text input. Line and column are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(message + " at " + std::to_string(line) + ":" + std::to_string(column)),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Backend could not be reached. Retryable.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, int attempts = 1)
      : Error(message), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// Backend answered, but the payload could not be interpreted.
class ReplyFormatError : public Error {
 public:
  ReplyFormatError(const std::string& message, std::string raw)
      : Error(message), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// The accessibility of a source could not be established (network, index outage).
// Distinct from a resolved absence, which is a Ghost.
class InconclusiveError : public Error {
 public:
  using Error::Error;
};

// No stable claim could be extracted around a citation.
class UnderspecifiedError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// A metric has no defined value for the given inputs.
class UndefinedResultError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field_path, const std::string& message)
      : Error(field_path + ": " + message), field_path_(field_path) {}
  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

}  // namespace citecheck
