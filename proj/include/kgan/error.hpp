#pragma once

#include <stdexcept>
#include <string>

namespace kgan {

/// Process exit status associated with each error family.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kAcceptance = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Any problem with input files: malformed XML, bad records, misaligned spans.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class LabelError : public DataError {
 public:
  using DataError::DataError;
};

class TreeError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

class AcceptanceError : public Error {
 public:
  explicit AcceptanceError(const std::string& what)
      : Error(ExitCode::kAcceptance, what) {}
};

}  // namespace kgan
