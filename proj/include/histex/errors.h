#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace histex {

/// Malformed history or predicate text. `position` is a byte offset into the parsed input.
class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::size_t position, std::string token, const std::string &what)
      : std::runtime_error(what), position_(position), token_(std::move(token)) {}

  std::size_t position() const { return position_; }
  const std::string &token() const { return token_; }

 private:
  std::size_t position_;
  std::string token_;
};

class SemanticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownColumn : public SemanticError {
 public:
  explicit UnknownColumn(const std::string &name)
      : SemanticError("unknown column '" + name + "'"), name_(name) {}
  const std::string &name() const { return name_; }

 private:
  std::string name_;
};

class InvalidRowCount : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, const std::string &what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnclassifiableHistory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownLevel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace histex
