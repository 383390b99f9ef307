#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedaa {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, shape mismatch or violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced by a numerical routine.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int layer)
      : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
  explicit NumericError(const std::string& what) : Error(what), layer_(-1) {}

  /// Index of the offending layer, or -1 when not tied to a layer.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

/// Malformed input file. Carries the byte offset where decoding failed.
class IngestionError : public Error {
 public:
  IngestionError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Inconsistent simulation state (e.g. no benign uploads for IPM).
class SimulationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Config text error; `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace fedaa
