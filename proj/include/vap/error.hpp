#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vap {

// Base of every error raised by the library. The CLI maps ConfigError to
// exit code 1 and FormatError / IoError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidEmbedding : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NoCandidates : public Error {
 public:
  NoCandidates() : Error("no candidate proposals") {}
};

class NoTrigger : public Error {
 public:
  explicit NoTrigger(const std::string& instruction)
      : Error("instruction has no \"my <category>\" trigger: \"" + instruction + "\"") {}
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class InvalidAssignment : public Error {
 public:
  using Error::Error;
};

class ProblemTooLarge : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. `offset` is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace vap
