#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cityflow {

// Base for every error raised by the library. `module()` names the owning
// component so front-ends can tag messages ("geo", "voxel", "flow", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Bad argument shape, size or combination.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Value outside the mathematical domain of an operation (lat, lambda, t).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input data that parses but violates an invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite activations or states.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed document. `offset()` is the byte position reported by the parser.
class ParseError : public Error {
 public:
  ParseError(std::string module, const std::string& what, std::size_t offset)
      : Error(std::move(module), what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Malformed binary artifact or I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cityflow
