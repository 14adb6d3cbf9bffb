#pragma once

#include <stdexcept>
#include <string>

namespace mlbias {

// Error categories map one-to-one onto CLI exit codes.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumerical = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

// Bad flags, bad config values, invalid arguments to library calls.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

// Malformed or insufficient input data (parse failures, OOV-only inputs, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

// Degenerate geometry, divergence, non-finite values.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::kNumerical, what) {}
};

}  // namespace mlbias
