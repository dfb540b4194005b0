#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace indirect {

/// (iteration, loss) pairs recorded by a training loop.
using LossTrace = std::vector<std::pair<long, double>>;

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind {
  kBadMagic,
  kTruncated,
  kSizeMismatch,
  kNonFinite,
  kBadHeader,
};

inline const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kTruncated: return "truncated";
    case FormatErrorKind::kSizeMismatch: return "size mismatch";
    case FormatErrorKind::kNonFinite: return "non-finite value";
    case FormatErrorKind::kBadHeader: return "bad header";
  }
  return "unknown";
}

/// Embedding file corruption, located by byte offset.
class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, std::size_t offset, const std::string& detail)
      : DataError("embedding file: " + std::string(to_string(kind)) + " at byte " +
                  std::to_string(offset) + ": " + detail),
        kind_(kind),
        offset_(offset) {}

  FormatErrorKind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  FormatErrorKind kind_;
  std::size_t offset_;
};

/// Numerical failure: degenerate directions, non-finite gradients, divergence
/// (CLI exit code 4).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vector whose norm is too small to define a direction.
class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Training produced a NaN loss. Carries the loss trace up to the failure.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, LossTrace trace)
      : NumericalError(what), trace_(std::move(trace)) {}

  const LossTrace& trace() const { return trace_; }

 private:
  LossTrace trace_;
};

}  // namespace indirect
