#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ultra {

// Precondition violations raise std::invalid_argument. The types below cover
// failures callers are expected to tell apart (the CLI maps them to exit codes).

/// Malformed or truncated binary file. `offset` is the byte position where
/// decoding stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// File header names an unsupported version, or its contents do not fit the
/// model they are paired with.
class VersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Config file problem; `line` is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss or gradient became NaN/Inf during training.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistic is undefined for the given input (zero variance and the like).
class DegenerateInput : public std::domain_error {
 public:
  DegenerateInput(const std::string& component, const std::string& what)
      : std::domain_error(what), component_(component) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace ultra
