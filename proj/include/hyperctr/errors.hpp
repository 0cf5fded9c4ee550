#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hyperctr {

// Every error carries the CLI exit code it maps to: 2 config, 3 data, 4 divergence.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape error: " + what, 3) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract error: " + what, 3) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error("parse error: " + file + ":" + std::to_string(line) + ": " + what, 3), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation error: " + what, 3) {}
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error("structural error: " + what, 3) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error("undefined metric: " + what, 3) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what, 2) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("i/o error: " + what, 3) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("numeric divergence: " + what, 4) {}
};

}  // namespace hyperctr
