#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace garlic {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid-parameter"; }
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t got)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(got)) {}
  const char* kind() const noexcept override { return "dimension-mismatch"; }
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  const char* kind() const noexcept override { return "format"; }

 private:
  std::size_t offset_;
};

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(std::size_t epoch, const std::string& detail)
      : Error("training diverged at epoch " + std::to_string(epoch) + ": " +
              detail),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  const char* kind() const noexcept override { return "divergence"; }

 private:
  std::size_t epoch_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace garlic
