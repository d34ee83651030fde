#pragma once

#include <stdexcept>
#include <string>

namespace flexmarket {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed case-file text. Carries the 1-based line of the offending token.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// A case file that parses but lacks a required table or column.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Network is not a tree rooted at the requested bus.
class TopologyError : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// A market instance that references unknown buses or is otherwise inconsistent.
class InstanceError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Solver returned something other than an optimal solution where one was required.
class SolveFailure : public Error {
 public:
  using Error::Error;
};

/// Cleared result violates a physical bound it must satisfy by construction.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace flexmarket
