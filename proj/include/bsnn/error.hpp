#pragma once

#include <stdexcept>
#include <string>

namespace bsnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs whose shapes or extents do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operation called out of order (missing cache, inference-mode backward, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A value outside its documented domain (sigma <= 0, label out of range, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value detected during a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration; `line` is 0 when the location is unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// File-system or stream failure; the message always names the path.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace bsnn
