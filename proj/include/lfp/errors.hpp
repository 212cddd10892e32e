#pragma once

#include <stdexcept>
#include <string>

namespace lfp {

/// Base class for all library errors; callers can catch this alone.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid user-supplied configuration (bad rank, bad flag combination, ...).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Malformed input files: bad header, non-numeric cell, duplicate rows.
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

/// Too little data to carry out an estimate (names the entry/pair/fold).
struct InsufficientDataError : Error {
  explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

/// A smoothing window stayed degenerate after the allowed local widenings.
struct DegenerateDataError : Error {
  explicit DegenerateDataError(const std::string& msg) : Error(msg) {}
};

/// A component collapsed to zero (norm underflow during normalization).
struct DegenerateComponentError : Error {
  explicit DegenerateComponentError(const std::string& msg) : Error(msg) {}
};

/// Persistent numeric failure: non-finite objective, singular solve after jitter.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace lfp
