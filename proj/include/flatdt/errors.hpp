#pragma once

#include <stdexcept>
#include <string>

namespace flatdt {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression or model text. Line and column are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error(message + " at " + std::to_string(line) + ":" + std::to_string(column)),
        line_(line),
        column_(column),
        bare_message_(message) {}

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& bare_message() const { return bare_message_; }

 private:
  int line_;
  int column_;
  std::string bare_message_;
};

/// A variable or parameter referenced by an expression has no value.
class UnboundSymbolError : public Error {
 public:
  explicit UnboundSymbolError(const std::string& symbol)
      : Error("unbound symbol '" + symbol + "'"), symbol_(symbol) {}
  const std::string& symbol() const { return symbol_; }

 private:
  std::string symbol_;
};

/// Division by zero or a domain error (log/sqrt) during evaluation.
/// Carries the printed offending subexpression.
class SingularEvaluationError : public Error {
 public:
  SingularEvaluationError(const std::string& what, const std::string& subexpression)
      : Error(what + " in '" + subexpression + "'"), subexpression_(subexpression) {}
  const std::string& subexpression() const { return subexpression_; }

 private:
  std::string subexpression_;
};

/// Iterative solver failed to converge (usually: left the local inverse's neighbourhood).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A guard expression could not be kept away from zero.
class GuardError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition (bad dimensions, horizon too short, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Semantically invalid model (undeclared symbols, wrong equation counts, ...).
class ModelError : public Error {
 public:
  ModelError(const std::string& message, int line = 0)
      : Error(line > 0 ? message + " (line " + std::to_string(line) + ")" : message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace flatdt
