#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dualmotion {

/// An input file could not be read or decoded.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A dataset violates its structural preconditions (too few frames, bad split, ...).
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A synthetic scene description is not renderable.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A binary file does not follow its declared layout.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(byte_offset) + ")"), offset_(byte_offset) {}
  std::uint64_t byte_offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Optimization produced a non-finite quantity or an invalid configuration.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dualmotion
