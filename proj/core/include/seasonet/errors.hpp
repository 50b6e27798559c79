#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace seasonet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of two operands disagree, or a shape violates a layer contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index or calendar stamp falls outside the valid range.
class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

/// Not enough months precede a target to build its input window.
class InsufficientHistoryError : public Error {
 public:
  using Error::Error;
};

/// Required months or calendar months are missing from a series or range.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but statistically degenerate (empty mask, zero variance).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Two series do not share a calendar span or grid.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// An object violates its documented invariants.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value or incompatible combination of settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint manifest and blobs disagree.
class CorruptionError : public Error {
 public:
  CorruptionError(const std::string& tensor, const std::string& what);
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

/// CGT decoding failure. Carries the byte offset where decoding stopped.
class ParseError : public Error {
 public:
  enum class Kind { kBadMagic, kTruncated, kBadMonth, kBadKind, kNonFinite, kMaskDomain, kShape, kIo };

  ParseError(Kind kind, std::uint64_t offset, const std::string& what);
  Kind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

}  // namespace seasonet
