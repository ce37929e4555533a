#pragma once

#include <stdexcept>
#include <string>

namespace strata {

/// Process exit codes used by the command-line driver.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

/// Category of a failure; decides the exit code at the CLI boundary.
enum class ErrorClass { kConfig, kData, kNumeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), cls_(cls), kind_(std::move(kind)) {}

  ErrorClass error_class() const noexcept { return cls_; }
  /// Short machine-readable name, e.g. "UnsortedInput".
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorClass cls_;
  std::string kind_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string kind, const std::string& what)
      : Error(ErrorClass::kConfig, std::move(kind), what) {}
};

class DataError : public Error {
 public:
  DataError(std::string kind, const std::string& what)
      : Error(ErrorClass::kData, std::move(kind), what) {}
};

class NumericError : public Error {
 public:
  NumericError(std::string kind, const std::string& what)
      : Error(ErrorClass::kNumeric, std::move(kind), what) {}
};

inline ExitCode exit_code_for(const Error& e) {
  switch (e.error_class()) {
    case ErrorClass::kConfig: return ExitCode::kConfig;
    case ErrorClass::kData: return ExitCode::kData;
    case ErrorClass::kNumeric: return ExitCode::kNumeric;
  }
  return ExitCode::kData;
}

}  // namespace strata
