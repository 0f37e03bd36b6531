#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace beamforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite coordinates, wrong vector lengths and similar caller mistakes.
class InvalidInput : public Error {
public:
  using Error::Error;
};

/// Inconsistent configuration: grid/geometry mismatch, L > N, unknown keys.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Numerical failure (non-finite loss, degenerate metric, eigensolver).
class NumericError : public Error {
public:
  using Error::Error;
};

/// Malformed container or config file. Carries the byte offset of the fault.
class ParseError : public Error {
public:
  ParseError(const std::string &what, std::uint64_t offset);
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

} // namespace beamforge
